import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chunkwise import jagged as jg
from chunkwise.errors import (
    DuplicateName,
    EmptyFieldSet,
    InvalidName,
    LengthMismatch,
    StructureMismatch,
)
from chunkwise.jagged import JaggedArray, from_lists
from chunkwise.records import (
    EventTable,
    mask_collection,
    select_table,
    table_from_columns,
    with_column,
    zip_collection,
)

from oracles import compress_loop, select_loop


def muons():
    pt = from_lists([[25.0, 10.0], [], [30.0, 40.0, 5.0]])
    eta = JaggedArray(pt.offsets, [0.1, -0.2, 1.0, 2.0, -1.5])
    phi = JaggedArray(pt.offsets, [0.0, 1.0, 2.0, 3.0, -3.0])
    q = JaggedArray(pt.offsets, np.array([1, -1, 1, -1, 1]))
    return {"pt": pt, "eta": eta, "phi": phi, "charge": q}


def test_zip_and_access():
    f = muons()
    c = zip_collection("muons", f)
    assert c.name == "muons"
    assert c.pt is f["pt"] or c.pt.equals(f["pt"])
    assert c["eta"].equals(f["eta"])
    assert c.n_events == 3


def test_zip_single_field_round_trip():
    pt = muons()["pt"]
    assert zip_collection("m", {"pt": pt}).pt.equals(pt)


def test_zip_errors():
    with pytest.raises(EmptyFieldSet):
        zip_collection("m", {})
    with pytest.raises(StructureMismatch):
        zip_collection("m", {"a": from_lists([[1.0]]), "b": from_lists([[1.0, 2.0]])})


def test_mask_collection_shares_offsets():
    c = zip_collection("muons", muons())
    out = mask_collection(c, c.pt > 20)
    offs = [f.offsets for f in out.fields.values()]
    assert all(np.array_equal(offs[0], o) for o in offs)
    assert out.pt.tolist() == [[25.0], [], [30.0, 40.0]]


def test_mask_collection_all_true_and_loop():
    f = muons()
    c = zip_collection("muons", f)
    same = c[JaggedArray(c.offsets, np.ones(5, dtype=bool))]
    for k in f:
        assert same[k].equals(f[k])
    mask = c.pt > 20
    masks = mask.tolist()
    out = c[mask]
    for k in f:
        assert out[k].tolist() == compress_loop(f[k].tolist(), masks)


def test_mask_collection_structure():
    c = zip_collection("muons", muons())
    with pytest.raises(StructureMismatch):
        mask_collection(c, from_lists([[True]] * 3))


def test_table_from_columns():
    f = muons()
    t = table_from_columns({"nMuon": np.array([2, 0, 3]), "Muon.pt": f["pt"]}, 3)
    assert t.names() == ["nMuon", "Muon.pt"]
    with pytest.raises(LengthMismatch):
        table_from_columns({"nMuon": np.array([2, 0])}, 3)
    with pytest.raises(LengthMismatch):
        table_from_columns({"Muon.pt": f["pt"]}, 4)
    with pytest.raises(DuplicateName):
        table_from_columns([("a", np.zeros(3)), ("a", np.ones(3))], 3)
    with pytest.raises(InvalidName):
        table_from_columns({"9bad": np.zeros(3)}, 3)


def test_with_column_persistence():
    t = table_from_columns({"x": np.array([1.0, 2.0])}, 2)
    t2 = with_column(t, "dimuon_mass", np.array([3.0, 4.0]))
    assert "dimuon_mass" in t2 and "dimuon_mass" not in t
    t3 = t2.with_column("x", np.array([9.0, 9.0]))
    assert t3["x"].tolist() == [9.0, 9.0]
    assert t2["x"].tolist() == [1.0, 2.0]
    with pytest.raises(LengthMismatch):
        with_column(t, "y", np.zeros(5))


def test_collection_from_table():
    f = muons()
    t = table_from_columns({f"Muon.{k}": v for k, v in f.items()}, 3)
    c = t.collection("Muon")
    assert sorted(c.fields) == sorted(f)


def test_metadata_survives_derivation():
    t = EventTable({"x": np.zeros(2)}, 2, {"file": "a.cfpk"})
    assert with_column(t, "y", np.ones(2)).metadata["file"] == "a.cfpk"
    assert select_table(t, [True, False]).metadata["file"] == "a.cfpk"


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.floats(-100, 100), max_size=5), max_size=10), st.data())
def test_select_table_equals_per_column(lists, data):
    n = len(lists)
    mask = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
    j = from_lists(lists, dtype=np.float64)
    flat = np.arange(n, dtype=np.int64)
    t = table_from_columns({"Muon.pt": j, "idx": flat}, n)
    out = select_table(t, mask)
    assert out.n_events == sum(mask)
    assert out["Muon.pt"].equals(jg.select_events(j, mask))
    assert out["idx"].tolist() == select_loop(flat.tolist(), mask)
