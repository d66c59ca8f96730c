"""Binned piecewise-constant correction tables.

Points outside the binned range are clamped to the first or last bin, NaN is
rejected. Jagged inputs come back jagged with the same offsets.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import MalformedPayload, NaNInput, NonMonotonicEdges, ShapeMismatch, StructureMismatch, TypeMismatch
from .hexfloat import hex64_array, unhex64_array
from .jagged import JaggedArray, as_flat


@dataclass(frozen=True)
class LookupDim:
    name: str
    edges: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.edges.shape[0] - 1


class BinnedLookup:
    def __init__(self, dims: Sequence, values):
        built = []
        for d in dims:
            if isinstance(d, LookupDim):
                name, edges = d.name, d.edges
            elif isinstance(d, Mapping):
                name, edges = d["name"], d["edges"]
            else:
                name, edges = d
            edges = np.array(edges, dtype=np.float64)
            if edges.ndim != 1 or edges.shape[0] < 2:
                raise ShapeMismatch(f"dimension {name!r} needs at least two edges")
            if np.any(np.isnan(edges)) or not np.all(np.diff(edges) > 0):
                raise NonMonotonicEdges(f"dimension {name!r}: edges must be strictly increasing")
            edges.flags.writeable = False
            built.append(LookupDim(name, edges))
        if not built:
            raise ShapeMismatch("a lookup needs at least one dimension")
        names = [d.name for d in built]
        if len(set(names)) != len(names):
            raise ShapeMismatch(f"duplicate dimension names {names}")
        shape = tuple(d.n_bins for d in built)
        vals = np.array(values, dtype=np.float64)
        if vals.size != int(np.prod(shape)) or vals.ndim not in (1, len(shape)):
            raise ShapeMismatch(f"values have {vals.size} entries, bins need {shape}")
        vals = vals.reshape(shape)
        vals.flags.writeable = False
        self.dims = tuple(built)
        self.values = vals

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def bin_index(self, dim: int, x: np.ndarray) -> np.ndarray:
        d = self.dims[dim]
        nan = np.isnan(x)
        if np.any(nan):
            raise NaNInput(d.name, int(np.flatnonzero(nan)[0]))
        idx = np.searchsorted(d.edges, x, side="right") - 1
        return np.clip(idx, 0, d.n_bins - 1)

    def __call__(self, *points, **named):
        return lookup_eval(self, *points, **named)

    def __repr__(self):
        return f"<BinnedLookup dims={[d.name for d in self.dims]} shape={self.shape}>"


def lookup_build(dims, values) -> BinnedLookup:
    return BinnedLookup(dims, values)


def lookup_eval(lut: BinnedLookup, *points, **named):
    """Evaluate at points given positionally or by dimension name."""
    if points and named:
        raise TypeMismatch("pass points positionally or by name, not both")
    if named:
        missing = [d.name for d in lut.dims if d.name not in named]
        if missing or len(named) != len(lut.dims):
            raise TypeMismatch(f"points must name exactly {[d.name for d in lut.dims]}")
        points = tuple(named[d.name] for d in lut.dims)
    if len(points) != len(lut.dims):
        raise TypeMismatch(f"expected {len(lut.dims)} point arrays, got {len(points)}")

    jagged = [isinstance(p, JaggedArray) for p in points]
    if any(jagged) and not all(jagged):
        raise StructureMismatch("mix of flat and jagged point arrays")
    if all(jagged):
        offsets = points[0].offsets
        for p in points[1:]:
            if not np.array_equal(p.offsets, offsets):
                raise StructureMismatch("jagged point arrays have different offsets")
        flats = [p.content for p in points]
    else:
        flats = [as_flat(p) for p in points]
        if len({f.shape[0] for f in flats}) > 1:
            raise StructureMismatch("flat point arrays have different lengths")
    flats = [f.astype(np.float64, copy=False) for f in flats]

    idx = tuple(lut.bin_index(d, f) for d, f in enumerate(flats))
    out = as_flat(lut.values[idx])
    if all(jagged):
        return JaggedArray(offsets, out)
    return out


def to_dict(lut: BinnedLookup) -> dict:
    return {
        "dims": [{"name": d.name, "edges": hex64_array(d.edges)} for d in lut.dims],
        "values": hex64_array(lut.values.reshape(-1)),
    }


def from_dict(d) -> BinnedLookup:
    if not isinstance(d, dict) or not isinstance(d.get("dims"), list):
        raise MalformedPayload("missing dims list", field="dims")
    dims = []
    for i, dd in enumerate(d["dims"]):
        if not isinstance(dd, dict) or not isinstance(dd.get("name"), str):
            raise MalformedPayload("dimension needs a name", field=f"dims[{i}].name")
        try:
            edges = unhex64_array(dd.get("edges", None) or [])
        except ValueError as e:
            raise MalformedPayload(str(e), field=f"dims[{i}].edges") from None
        dims.append((dd["name"], edges))
    if not isinstance(d.get("values"), list):
        raise MalformedPayload("missing values list", field="values")
    try:
        vals = unhex64_array(d["values"])
    except ValueError as e:
        raise MalformedPayload(str(e), field="values") from None
    return BinnedLookup(dims, vals)


def save(lut: BinnedLookup, path):
    with open(path, "w") as f:
        json.dump(to_dict(lut), f, separators=(",", ":"))


def load(path) -> BinnedLookup:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedPayload(f"invalid JSON: {e.msg}", position=e.pos) from None
    return from_dict(d)
