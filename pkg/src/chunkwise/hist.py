"""Mergeable N-dimensional weighted histograms.

Numeric axes (:class:`Regular`, :class:`Variable`) carry an underflow slot
at index 0 and an overflow slot at index ``n + 1``. Binning is left-closed,
right-open; ``x == hi`` and NaN land in overflow. :class:`Categorical` axes
have no flow slots and grow when a fill brings a new label.

Storage is dense and row-major (last axis fastest). Fills accumulate in
input order, so an array fill is bitwise equal to filling entry by entry.

>>> h = Histogram([Regular("x", 4, 0.0, 4.0)])
>>> h.fill(x=[0.5, 1.5, 1.5, 5.0])
>>> h.values(include_flow=True).tolist()
[0.0, 1.0, 2.0, 0.0, 0.0, 1.0]
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import (
    DuplicateAxisName,
    EmptyAxisList,
    IncompatibleAxes,
    LengthMismatch,
    MalformedPayload,
    NonMonotonicEdges,
    TypeMismatch,
    UnknownAxis,
)
from .hexfloat import hex64, hex64_array, unhex64, unhex64_array
from .jagged import JaggedArray

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Regular:
    name: str
    n: int
    lo: float
    hi: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool) or self.n <= 0:
            raise ValueError(f"axis {self.name!r}: n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ValueError(f"axis {self.name!r}: need finite lo < hi")

    @property
    def size(self) -> int:
        return self.n + 2

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n + 1)

    def slots(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0], dtype=np.int64)
        under = x < self.lo
        inside = ~under & (x < self.hi)
        out[under] = 0
        out[~under & ~inside] = self.n + 1
        b = np.floor((x[inside] - self.lo) * float(self.n) / (self.hi - self.lo)).astype(np.int64)
        out[inside] = np.clip(b, 0, self.n - 1) + 1
        return out

    def same_binning(self, other) -> bool:
        return (
            isinstance(other, Regular)
            and self.n == other.n
            and hex64(self.lo) == hex64(other.lo)
            and hex64(self.hi) == hex64(other.hi)
        )


@dataclass(frozen=True)
class Variable:
    name: str
    edges: tuple

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if len(edges) < 2:
            raise ValueError(f"axis {self.name!r}: need at least two edges")
        if any(not math.isfinite(e) for e in edges):
            raise ValueError(f"axis {self.name!r}: edges must be finite")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise NonMonotonicEdges(f"axis {self.name!r}: edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @property
    def n(self) -> int:
        return len(self.edges) - 1

    @property
    def size(self) -> int:
        return self.n + 2

    def slots(self, x: np.ndarray) -> np.ndarray:
        # NaN sorts past every edge -> overflow
        return np.searchsorted(np.asarray(self.edges), x, side="right").astype(np.int64)

    def same_binning(self, other) -> bool:
        return (
            isinstance(other, Variable)
            and len(self.edges) == len(other.edges)
            and hex64_array(self.edges) == hex64_array(other.edges)
        )


class Categorical:
    """String-labelled axis; labels keep first-seen order and grow on fill."""

    def __init__(self, name: str, labels: Sequence[str] = ()):
        self.name = name
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        for label in labels:
            if not isinstance(label, str):
                raise TypeMismatch(f"axis {name!r}: labels must be strings")
            if label in self._index:
                raise ValueError(f"axis {name!r}: duplicate label {label!r}")
            self._add(label)

    def _add(self, label: str) -> int:
        self._index[label] = len(self._labels)
        self._labels.append(label)
        return self._index[label]

    @property
    def labels(self) -> tuple:
        return tuple(self._labels)

    @property
    def size(self) -> int:
        return len(self._labels)

    def index(self, label: str) -> int:
        return self._index[label]

    def copy(self) -> "Categorical":
        return Categorical(self.name, self._labels)

    def __eq__(self, other):
        return isinstance(other, Categorical) and self.name == other.name and self._labels == other._labels

    __hash__ = None

    def __repr__(self):
        return f"Categorical({self.name!r}, {self._labels!r})"


Axis = Union[Regular, Variable, Categorical]


def _is_numeric(axis) -> bool:
    return isinstance(axis, (Regular, Variable))


class Histogram:
    """Dense weighted counts (``sumw``) and squared weights (``sumw2``)."""

    def __init__(self, axes: Sequence[Axis]):
        axes = list(axes)
        if not axes:
            raise EmptyAxisList("a histogram needs at least one axis")
        names = [a.name for a in axes]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise DuplicateAxisName(f"duplicate axis names: {sorted(dup)}")
        for a in axes:
            if not isinstance(a, (Regular, Variable, Categorical)):
                raise TypeMismatch(f"not an axis: {a!r}")
        self._axes = [a.copy() if isinstance(a, Categorical) else a for a in axes]
        shape = self.shape
        self._sumw = np.zeros(shape, dtype=np.float64)
        self._sumw2 = np.zeros(shape, dtype=np.float64)

    @property
    def axes(self) -> tuple:
        return tuple(self._axes)

    @property
    def axis_names(self) -> tuple:
        return tuple(a.name for a in self._axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self._axes)

    def axis(self, name: str):
        for a in self._axes:
            if a.name == name:
                return a
        raise UnknownAxis(f"no axis named {name!r}")

    @property
    def sumw(self) -> np.ndarray:
        v = self._sumw.view()
        v.flags.writeable = False
        return v

    @property
    def sumw2(self) -> np.ndarray:
        v = self._sumw2.view()
        v.flags.writeable = False
        return v

    def copy(self) -> "Histogram":
        h = Histogram.__new__(Histogram)
        h._axes = [a.copy() if isinstance(a, Categorical) else a for a in self._axes]
        h._sumw = self._sumw.copy()
        h._sumw2 = self._sumw2.copy()
        return h

    def empty_like(self) -> "Histogram":
        """Same axes (including current labels), zero contents."""
        return Histogram(self._axes)

    def _grow(self, dim: int, extra: int):
        pad = [(0, 0)] * len(self._axes)
        pad[dim] = (0, extra)
        self._sumw = np.pad(self._sumw, pad)
        self._sumw2 = np.pad(self._sumw2, pad)

    def fill(self, *coords, weight=None, **named):
        """Fill from arrays, one coordinate per axis (positionally or by axis name).

        Categorical coordinates may be a single string, broadcast to every entry.
        """
        if coords and named:
            raise TypeMismatch("pass coordinates positionally or by name, not both")
        if named:
            unknown = set(named) - set(self.axis_names)
            if unknown:
                raise UnknownAxis(f"unknown axes {sorted(unknown)}")
            missing = [n for n in self.axis_names if n not in named]
            if missing:
                raise TypeMismatch(f"missing coordinates for axes {missing}")
            coords = tuple(named[n] for n in self.axis_names)
        if len(coords) != len(self._axes):
            raise TypeMismatch(f"expected {len(self._axes)} coordinates, got {len(coords)}")

        prepared = []
        length = None
        for axis, c in zip(self._axes, coords):
            if isinstance(c, JaggedArray):
                raise TypeMismatch(f"axis {axis.name!r}: flatten jagged coordinates before filling")
            if isinstance(axis, Categorical):
                if isinstance(c, str):
                    prepared.append(("scalar", c))
                    continue
                arr = np.asarray(c, dtype=object) if not isinstance(c, np.ndarray) else c
                if arr.ndim != 1 or not all(isinstance(v, str) for v in arr.tolist()):
                    raise TypeMismatch(f"axis {axis.name!r}: categorical coordinates must be strings")
                prepared.append(("array", arr.tolist()))
                n = arr.shape[0]
            else:
                arr = np.asarray(c)
                if arr.ndim == 0:
                    arr = arr.reshape(1)
                if arr.ndim != 1 or arr.dtype.kind not in "iuf":
                    raise TypeMismatch(f"axis {axis.name!r}: numeric coordinates required")
                arr = arr.astype(np.float64, copy=False)
                prepared.append(("array", arr))
                n = arr.shape[0]
            if length is None:
                length = n
            elif n != length:
                raise LengthMismatch(f"axis {axis.name!r}: {n} entries, expected {length}")
        if length is None:
            length = 1

        if weight is None:
            w = np.ones(length, dtype=np.float64)
        else:
            w = np.asarray(weight)
            if w.dtype.kind not in "iuf":
                raise TypeMismatch("weights must be numeric")
            w = w.astype(np.float64, copy=False)
            if w.ndim == 0:
                w = np.full(length, float(w))
            elif w.ndim != 1 or w.shape[0] != length:
                raise LengthMismatch(f"weight has shape {w.shape}, expected ({length},)")

        slots = []
        for dim, (axis, (kind, c)) in enumerate(zip(self._axes, prepared)):
            if isinstance(axis, Categorical):
                labels = [c] if kind == "scalar" else c
                before = axis.size
                for label in labels:
                    if label not in axis._index:
                        axis._add(label)
                if axis.size > before:
                    self._grow(dim, axis.size - before)
                if kind == "scalar":
                    slots.append(np.full(length, axis.index(c), dtype=np.int64))
                else:
                    slots.append(np.fromiter((axis._index[s] for s in c), dtype=np.int64, count=length))
            else:
                slots.append(axis.slots(c))
        if length == 0:
            return
        flat = np.ravel_multi_index(slots, self.shape)
        np.add.at(self._sumw.reshape(-1), flat, w)
        np.add.at(self._sumw2.reshape(-1), flat, w * w)

    def values(self, include_flow: bool = False, sumw2: bool = False) -> np.ndarray:
        src = self._sumw2 if sumw2 else self._sumw
        if not include_flow:
            idx = tuple(slice(1, -1) if _is_numeric(a) else slice(None) for a in self._axes)
            src = src[idx]
        return src.copy()

    def variances(self, include_flow: bool = False) -> np.ndarray:
        return self.values(include_flow, sumw2=True)

    def total(self) -> float:
        return float(self._sumw.sum())

    def equals(self, other) -> bool:
        """Bitwise equality of axes, labels, sumw and sumw2."""
        if not isinstance(other, Histogram) or len(self._axes) != len(other._axes):
            return False
        for a, b in zip(self._axes, other._axes):
            if a.name != b.name:
                return False
            if isinstance(a, Categorical):
                if a != b:
                    return False
            elif not a.same_binning(b):
                return False
        return (
            self._sumw.tobytes() == other._sumw.tobytes()
            and self._sumw2.tobytes() == other._sumw2.tobytes()
        )

    def __eq__(self, other):
        return self.equals(other)

    __hash__ = None

    def __add__(self, other):
        return merge(self, other)

    def __repr__(self):
        return f"<Histogram axes={self._axes!r} total={self.total()}>"


def hist_new(axes: Sequence[Axis]) -> Histogram:
    return Histogram(axes)


def check_compatible(a: Histogram, b: Histogram):
    if len(a.axes) != len(b.axes):
        raise IncompatibleAxes(f"axis counts differ: {len(a.axes)} vs {len(b.axes)}")
    for x, y in zip(a.axes, b.axes):
        if type(x) is not type(y):
            raise IncompatibleAxes(f"axis {x.name!r}: kinds differ ({type(x).__name__} vs {type(y).__name__})")
        if x.name != y.name:
            raise IncompatibleAxes(f"axis names differ: {x.name!r} vs {y.name!r}")
        if _is_numeric(x) and not x.same_binning(y):
            raise IncompatibleAxes(f"axis {x.name!r}: edges differ")


def merge(a: Histogram, b: Histogram) -> Histogram:
    """Slotwise sum; categorical labels are a's followed by b's unseen ones."""
    check_compatible(a, b)
    axes = []
    index_a, index_b = [], []
    for x, y in zip(a.axes, b.axes):
        if isinstance(x, Categorical):
            union = Categorical(x.name, x.labels)
            for label in y.labels:
                if label not in union._index:
                    union._add(label)
            axes.append(union)
            index_a.append(np.arange(x.size))
            index_b.append(np.array([union.index(l) for l in y.labels], dtype=np.int64))
        else:
            axes.append(x)
            index_a.append(np.arange(x.size))
            index_b.append(np.arange(y.size))
    out = Histogram(axes)
    out._sumw[np.ix_(*index_a)] = a._sumw
    out._sumw2[np.ix_(*index_a)] = a._sumw2
    out._sumw[np.ix_(*index_b)] += b._sumw
    out._sumw2[np.ix_(*index_b)] += b._sumw2
    return out


def values(h: Histogram, include_flow: bool = False) -> tuple[np.ndarray, tuple]:
    v = h.values(include_flow)
    return v, v.shape


def project(h: Histogram, keep_axes: Sequence[str]) -> Histogram:
    """Sum over every axis not in ``keep_axes`` (flow included); keeps the listed order."""
    keep_axes = list(keep_axes)
    if not keep_axes:
        raise EmptyAxisList("project needs at least one axis to keep")
    names = list(h.axis_names)
    for n in keep_axes:
        if n not in names:
            raise UnknownAxis(f"no axis named {n!r}")
    if len(set(keep_axes)) != len(keep_axes):
        raise DuplicateAxisName(f"duplicate axes in {keep_axes}")
    dropped = tuple(i for i, n in enumerate(names) if n not in keep_axes)
    kept = [i for i, n in enumerate(names) if n in keep_axes]
    sw = h._sumw.sum(axis=dropped) if dropped else h._sumw
    sw2 = h._sumw2.sum(axis=dropped) if dropped else h._sumw2
    order = [kept.index(names.index(n)) for n in keep_axes]
    out = Histogram([h.axes[names.index(n)] for n in keep_axes])
    out._sumw = np.ascontiguousarray(np.transpose(sw, order), dtype=np.float64).copy()
    out._sumw2 = np.ascontiguousarray(np.transpose(sw2, order), dtype=np.float64).copy()
    return out


def keyed(h: Histogram) -> dict:
    """Map (label or numeric slot index, ...) -> (sumw, sumw2); independent of label order."""
    keys = []
    for a in h.axes:
        keys.append(list(a.labels) if isinstance(a, Categorical) else list(range(a.size)))
    out = {}
    for idx in np.ndindex(*h.shape):
        key = tuple(keys[d][i] for d, i in enumerate(idx))
        out[key] = (float(h._sumw[idx]), float(h._sumw2[idx]))
    return out


# serialization


def axis_to_dict(a: Axis) -> dict:
    if isinstance(a, Regular):
        return {"kind": "regular", "name": a.name, "n": a.n, "lo": hex64(a.lo), "hi": hex64(a.hi)}
    if isinstance(a, Variable):
        return {"kind": "variable", "name": a.name, "edges": hex64_array(a.edges)}
    return {"kind": "categorical", "name": a.name, "labels": list(a.labels)}


def to_dict(h: Histogram) -> dict:
    return {
        "version": FORMAT_VERSION,
        "axes": [axis_to_dict(a) for a in h.axes],
        "sumw": hex64_array(h._sumw.reshape(-1)),
        "sumw2": hex64_array(h._sumw2.reshape(-1)),
    }


def _require(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise MalformedPayload("missing key", field=f"{where}.{key}" if where else key)
    val = obj[key]
    if kind is int:
        ok = isinstance(val, int) and not isinstance(val, bool)
    else:
        ok = isinstance(val, kind)
    if not ok:
        raise MalformedPayload(f"expected {kind.__name__}", field=f"{where}.{key}" if where else key)
    return val


def _hexval(s, field):
    try:
        return unhex64(s)
    except ValueError:
        raise MalformedPayload("bad hex64 float", field=field) from None


def axis_from_dict(d, where: str) -> Axis:
    kind = _require(d, "kind", str, where)
    name = _require(d, "name", str, where)
    try:
        if kind == "regular":
            n = _require(d, "n", int, where)
            lo = _hexval(_require(d, "lo", str, where), f"{where}.lo")
            hi = _hexval(_require(d, "hi", str, where), f"{where}.hi")
            return Regular(name, n, lo, hi)
        if kind == "variable":
            raw = _require(d, "edges", list, where)
            try:
                edges = unhex64_array(raw)
            except ValueError as e:
                raise MalformedPayload(str(e), field=f"{where}.edges") from None
            return Variable(name, tuple(edges.tolist()))
        if kind == "categorical":
            labels = _require(d, "labels", list, where)
            return Categorical(name, labels)
    except MalformedPayload:
        raise
    except (ValueError, TypeError) as e:
        raise MalformedPayload(str(e), field=where) from None
    raise MalformedPayload(f"unknown axis kind {kind!r}", field=f"{where}.kind")


def from_dict(d) -> Histogram:
    version = _require(d, "version", int, "")
    if version != FORMAT_VERSION:
        raise MalformedPayload(f"unsupported version {version}", field="version")
    raw_axes = _require(d, "axes", list, "")
    axes = [axis_from_dict(a, f"axes[{i}]") for i, a in enumerate(raw_axes)]
    try:
        h = Histogram(axes)
    except (ValueError, TypeError) as e:
        raise MalformedPayload(str(e), field="axes") from None
    size = int(np.prod(h.shape))
    for key in ("sumw", "sumw2"):
        raw = _require(d, key, list, "")
        if len(raw) != size:
            raise MalformedPayload(f"expected {size} entries, got {len(raw)}", field=key)
        try:
            arr = unhex64_array(raw)
        except ValueError as e:
            raise MalformedPayload(str(e), field=key) from None
        setattr(h, "_" + key, arr.reshape(h.shape).copy())
    if np.any(h._sumw2 < 0):
        raise MalformedPayload("negative sumw2 entry", field="sumw2")
    return h


def hist_serialize(h: Histogram) -> bytes:
    return json.dumps(to_dict(h), separators=(",", ":")).encode("utf-8")


def hist_deserialize(payload: bytes) -> Histogram:
    try:
        text = payload.decode("utf-8") if isinstance(payload, (bytes, bytearray)) else payload
        d = json.loads(text)
    except UnicodeDecodeError as e:
        raise MalformedPayload("payload is not UTF-8", position=e.start) from None
    except json.JSONDecodeError as e:
        raise MalformedPayload(f"invalid JSON: {e.msg}", position=e.pos) from None
    if not isinstance(d, dict):
        raise MalformedPayload("top level must be an object", position=0)
    return from_dict(d)
