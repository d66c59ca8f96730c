"""Regenerate the format goldens. Run only when the formats change on purpose."""
from pathlib import Path

from chunkwise.dataset import generate_toy
from chunkwise.hist import Categorical, Histogram, Regular, Variable, hist_serialize

HERE = Path(__file__).parent


def golden_hist() -> Histogram:
    h = Histogram([Categorical("dataset"), Regular("mass", 4, 0.0, 120.0), Variable("eta", (-2.4, 0.0, 2.4))])
    h.fill(dataset=["mc", "mc", "data", "mc"], mass=[10.0, 95.5, 130.0, -1.0],
           eta=[0.5, -1.0, 0.0, 3.0], weight=[0.5, 1.25, 2.0, 0.1])
    return h


if __name__ == "__main__":
    generate_toy(HERE / "golden.cfpk", 2024, 20, row_group_size=8)
    (HERE / "golden_hist.json").write_bytes(hist_serialize(golden_hist()))
