import math

import numpy as np
import pytest

from chunkwise import accumulator as acc
from chunkwise.accumulator import Counter, IntCounter, Namespace, SetAcc
from chunkwise.dataset import TOY_SCHEMA, Manifest, generate_toy, write_file
from chunkwise.engine import (
    Pooled,
    Processor,
    Sequential,
    builtin_dimuon_processor,
    deterministic_tree_reduce,
    dimuon_mass,
    run,
)
from chunkwise.errors import ProcessorError, ShapeMismatch, UnknownColumn
from chunkwise.jagged import from_lists
from chunkwise.records import EventTable

from oracles import dimuon_event_loop, regular_slot, toy_event_lists


def toy_file(path, events):
    """events: list of muon lists [(pt, eta, phi, charge), ...]."""
    cols = {}
    for i, name in enumerate(["Muon.pt", "Muon.eta", "Muon.phi"]):
        cols[name] = from_lists([[m[i] for m in ev] for ev in events], dtype=np.float64)
    cols["Muon.charge"] = from_lists([[m[3] for m in ev] for ev in events], dtype=np.int64)
    cols["MET"] = np.zeros(len(events))
    write_file(path, TOY_SCHEMA, [EventTable(cols, len(events))])
    return str(path)


def test_mass_formula_example():
    m = dimuon_mass(np.array([30.0]), np.array([0.0]), np.array([0.0]),
                    np.array([40.0]), np.array([0.0]), np.array([math.pi]))
    assert m[0] == pytest.approx(math.sqrt(4800), rel=1e-15)
    assert round(float(m[0]), 4) == 69.2820


def test_dimuon_examples(tmp_path):
    path = toy_file(tmp_path / "t.cfpk", [
        [(30.0, 0.0, 0.0, 1), (40.0, 0.0, math.pi, -1)],   # one OS pair
        [(30.0, 0.0, 0.0, 1), (40.0, 0.0, math.pi, 1)],    # same sign
        [(30.0, 0.0, 0.0, 1), (10.0, 0.0, 1.0, -1)],       # one surviving muon
        [],
    ])
    out, report = run(builtin_dimuon_processor(), Manifest({"mc": [path]}), 2)
    cf = out["cutflow"]
    assert (cf["all"].value, cf["obj_sel"].value, cf["ge2mu"].value, cf["os_pairs"].value) == (4, 3, 2, 1)
    h = out["mass"]
    assert h.axis("dataset").labels == ("mc",)
    slot = regular_slot(math.sqrt(4800), 60, 0.0, 120.0)
    assert h.sumw[0, slot] == 1.0 and h.total() == 1.0
    assert out["files"] == SetAcc({"t.cfpk"})
    assert report.events_processed == 4 and report.chunks_processed == 2


def test_dimuon_matches_event_loop(tmp_path):
    path = tmp_path / "toy.cfpk"
    generate_toy(path, 11, 12_000, row_group_size=5000)
    out, _ = run(builtin_dimuon_processor(), Manifest({"mc": [str(path)]}), 3000)
    pt, eta, phi, q, _ = toy_event_lists(11, 12_000)
    counts, cut = dimuon_event_loop(pt, eta, phi, q)
    assert {k: v.value for k, v in out["cutflow"].items()} == cut
    row = out["mass"].sumw[0]
    assert {i: int(v) for i, v in enumerate(row) if v} == counts


def test_tree_reduce():
    cs = [Counter(v) for v in (1, 2, 3, 4)]
    assert deterministic_tree_reduce(cs) == Counter(10)
    assert deterministic_tree_reduce([IntCounter(5)]) == IntCounter(5)
    assert deterministic_tree_reduce([], IntCounter(0)) == IntCounter(0)
    with pytest.raises(ShapeMismatch):
        deterministic_tree_reduce([])
    with pytest.raises(ShapeMismatch):
        deterministic_tree_reduce([IntCounter(1), Counter(1)])


def test_tree_reduce_order():
    # float values where ((a+b)+(c+d)) differs from the left fold
    vals = [1e16, 1.0, -1e16, 1.0]
    got = deterministic_tree_reduce([Counter(v) for v in vals]).value
    assert got == (vals[0] + vals[1]) + (vals[2] + vals[3])
    vals = list(range(1, 12))
    fold = 0
    for v in vals:
        fold += v
    assert deterministic_tree_reduce([IntCounter(v) for v in vals]).value == fold
    # odd tail carried up: [[0+1],[2+3],[4]] -> [(0+1)+(2+3)], [4]
    seen = deterministic_tree_reduce([SetAcc({str(i)}) for i in range(5)])
    assert seen == SetAcc({"0", "1", "2", "3", "4"})


def test_empty_manifest():
    out, report = run(builtin_dimuon_processor(), Manifest({}), 10)
    assert out == acc.identity_of(builtin_dimuon_processor().accumulator_shape())
    assert report.events_processed == 0 and report.chunks_processed == 0


@pytest.fixture(scope="module")
def toy_manifest(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    a, b = d / "a.cfpk", d / "b.cfpk"
    generate_toy(a, 5, 9000, row_group_size=2000)
    generate_toy(b, 6, 4000, row_group_size=2000)
    return Manifest({"mc": [str(a)], "data": [str(b)]})


def test_executor_equivalence(toy_manifest):
    ref, rep = run(builtin_dimuon_processor(), toy_manifest, 1000, Sequential())
    blob = acc.dumps(ref)
    for w in (1, 2, 4):
        out, r = run(builtin_dimuon_processor(), toy_manifest, 1000, Pooled(workers=w))
        assert acc.dumps(out) == blob
        assert r.events_processed == rep.events_processed == 13000
        assert r.chunks_processed == 13
        assert r.bytes_read == rep.bytes_read


def test_faults_and_retries(toy_manifest):
    ref, _ = run(builtin_dimuon_processor(), toy_manifest, 1000)
    for config in (Sequential(max_retries=2), Pooled(workers=2, max_retries=2)):
        out, report = run(builtin_dimuon_processor(), toy_manifest, 1000, config, faults={3: 2})
        assert report.retries == 2 and acc.dumps(out) == acc.dumps(ref)
    for config in (Sequential(max_retries=1), Pooled(workers=2, max_retries=1)):
        with pytest.raises(ProcessorError) as err:
            run(builtin_dimuon_processor(), toy_manifest, 1000, config, faults={3: 2})
        assert err.value.chunk_index == 3


def test_config_validation():
    with pytest.raises(ValueError):
        Pooled(workers=0)
    with pytest.raises(ValueError):
        Sequential(max_retries=-1)


class CountingProcessor(Processor):
    calls = 0

    def __init__(self, cols):
        self.cols = cols

    def columns(self):
        return self.cols

    def accumulator_shape(self):
        return Namespace({"n": IntCounter(0)})

    def process(self, dataset, events):
        CountingProcessor.calls += 1
        return Namespace({"n": IntCounter(events.n_events)})


class BadShape(CountingProcessor):
    def process(self, dataset, events):
        return Namespace({"m": IntCounter(1)})


class Crashes(CountingProcessor):
    def process(self, dataset, events):
        raise RuntimeError("boom")


def test_preflight_before_any_processing(toy_manifest):
    CountingProcessor.calls = 0
    with pytest.raises(UnknownColumn):
        run(CountingProcessor(["MET", "Jet.pt"]), toy_manifest, 1000)
    assert CountingProcessor.calls == 0
    out, _ = run(CountingProcessor(["MET"]), toy_manifest, 1000)
    assert out["n"].value == 13000 and CountingProcessor.calls == 13


def test_shape_mismatch_and_processor_error(toy_manifest):
    with pytest.raises(ShapeMismatch):
        run(BadShape(["MET"]), toy_manifest, 5000)
    with pytest.raises(ShapeMismatch):
        run(BadShape(["MET"]), toy_manifest, 5000, Pooled(workers=2))
    with pytest.raises(ProcessorError) as err:
        run(Crashes(["MET"]), toy_manifest, 5000, Pooled(workers=2, max_retries=1))
    assert "boom" in str(err.value)
