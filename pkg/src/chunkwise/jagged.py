"""Flat and jagged numeric columns.

A flat column is a one-dimensional, read-only numpy array of dtype float64,
int64 or bool. A jagged column stores one variable-length sublist per event
as an ``offsets`` array (length ``n_events + 1``) plus a flat ``content``
array; sublist ``i`` is ``content[offsets[i]:offsets[i + 1]]``.

All operations allocate new outputs. Reductions walk each sublist front to
back, so float results match a plain per-event Python loop bit for bit.
"""
from __future__ import annotations

import numbers
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    CountMismatch,
    DivisionByZero,
    IndexOutOfBounds,
    LengthMismatch,
    MissingDefault,
    NegativeCount,
    StructureMismatch,
    TypeMismatch,
)

__all__ = [
    "JaggedArray",
    "as_flat",
    "from_counts",
    "from_lists",
    "flatten",
    "elementwise",
    "unary",
    "reduce",
    "compress_inner",
    "select_events",
    "distinct_pairs",
    "gather_inner",
    "local_index",
    "broadcast_to_jagged",
    "ELEMENTWISE_OPS",
    "REDUCE_KINDS",
]

DTYPES = (np.dtype(np.float64), np.dtype(np.int64), np.dtype(np.bool_))

ELEMENTWISE_OPS = ("add", "sub", "mul", "div", "lt", "le", "gt", "ge", "eq", "and", "or")
REDUCE_KINDS = ("sum", "count", "max", "min", "any", "all")


def _readonly(arr: np.ndarray) -> np.ndarray:
    if arr.flags.writeable:
        arr = arr.view()
        arr.flags.writeable = False
    return arr


def as_flat(values, dtype=None) -> np.ndarray:
    """Coerce ``values`` to a read-only 1-D array with a supported dtype."""
    if isinstance(values, JaggedArray):
        raise TypeMismatch("expected a flat array, got a jagged array")
    if dtype is not None:
        arr = np.asarray(values, dtype=dtype)
    else:
        arr = np.asarray(values)
        if arr.dtype.kind in "iu":
            arr = arr.astype(np.int64, copy=False)
        elif arr.dtype.kind == "f":
            arr = arr.astype(np.float64, copy=False)
    if arr.ndim != 1:
        raise TypeMismatch(f"flat arrays are one-dimensional, got ndim={arr.ndim}")
    if arr.dtype not in DTYPES:
        raise TypeMismatch(f"unsupported dtype {arr.dtype}")
    return _readonly(arr)


class JaggedArray:
    """One level of variable-length sublists over a flat content array."""

    __slots__ = ("_offsets", "_content")
    __hash__ = None  # elementwise ``==``

    def __init__(self, offsets, content):
        offsets = np.asarray(offsets)
        if offsets.ndim != 1 or offsets.size == 0:
            raise StructureMismatch("offsets must be a non-empty 1-D array")
        if offsets.dtype.kind not in "iu":
            raise TypeMismatch(f"offsets must be integers, got {offsets.dtype}")
        offsets = offsets.astype(np.int64, copy=False)
        content = as_flat(content)
        if offsets[0] != 0:
            raise StructureMismatch("offsets[0] must be 0")
        if offsets.size > 1 and np.any(offsets[1:] < offsets[:-1]):
            raise StructureMismatch("offsets must be non-decreasing")
        if offsets[-1] != content.shape[0]:
            raise CountMismatch(
                f"offsets end at {int(offsets[-1])} but content has {content.shape[0]} elements"
            )
        self._offsets = _readonly(offsets)
        self._content = content

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets

    @property
    def content(self) -> np.ndarray:
        return self._content

    @property
    def dtype(self) -> np.dtype:
        return self._content.dtype

    @property
    def n_events(self) -> int:
        return self._offsets.shape[0] - 1

    @property
    def counts(self) -> np.ndarray:
        return _readonly(np.diff(self._offsets))

    def __len__(self):
        return self.n_events

    def sublist(self, i: int) -> np.ndarray:
        return self._content[self._offsets[i] : self._offsets[i + 1]]

    def __getitem__(self, key):
        if isinstance(key, numbers.Integral):
            n = self.n_events
            i = int(key)
            if i < 0:
                i += n
            if not 0 <= i < n:
                raise IndexError(f"event {key} out of range for {n} events")
            return self.sublist(i)
        if isinstance(key, JaggedArray):
            if key.dtype == np.bool_:
                return compress_inner(self, key)
            return gather_inner(self, key)
        mask = as_flat(key)
        if mask.dtype != np.bool_:
            raise TypeMismatch("event selection requires a bool mask")
        return select_events(self, mask)

    def tolist(self) -> list:
        c = self._content.tolist()
        o = self._offsets.tolist()
        return [c[o[i] : o[i + 1]] for i in range(self.n_events)]

    def equals(self, other) -> bool:
        """Structural, bitwise equality (offsets, dtype and content bits)."""
        if not isinstance(other, JaggedArray):
            return False
        return (
            self.dtype == other.dtype
            and np.array_equal(self._offsets, other._offsets)
            and self._content.tobytes() == other._content.tobytes()
        )

    def __repr__(self):
        items = self.tolist()
        if len(items) > 6:
            shown = ", ".join(map(str, items[:3])) + ", ..., " + ", ".join(map(str, items[-2:]))
        else:
            shown = ", ".join(map(str, items))
        return f"<JaggedArray [{shown}] n_events={self.n_events} dtype={self.dtype}>"

    # operator sugar over elementwise()
    def __add__(self, o): return elementwise("add", self, o)
    def __radd__(self, o): return elementwise("add", o, self)
    def __sub__(self, o): return elementwise("sub", self, o)
    def __rsub__(self, o): return elementwise("sub", o, self)
    def __mul__(self, o): return elementwise("mul", self, o)
    def __rmul__(self, o): return elementwise("mul", o, self)
    def __truediv__(self, o): return elementwise("div", self, o)
    def __rtruediv__(self, o): return elementwise("div", o, self)
    def __lt__(self, o): return elementwise("lt", self, o)
    def __le__(self, o): return elementwise("le", self, o)
    def __gt__(self, o): return elementwise("gt", self, o)
    def __ge__(self, o): return elementwise("ge", self, o)
    def __eq__(self, o): return elementwise("eq", self, o)
    def __and__(self, o): return elementwise("and", self, o)
    def __rand__(self, o): return elementwise("and", o, self)
    def __or__(self, o): return elementwise("or", self, o)
    def __ror__(self, o): return elementwise("or", o, self)
    def __neg__(self): return unary(np.negative, self)
    def __abs__(self): return unary(np.abs, self)


Array = Union[np.ndarray, JaggedArray]


def from_counts(counts, content) -> JaggedArray:
    counts = np.asarray(counts)
    if counts.ndim != 1:
        raise TypeMismatch("counts must be one-dimensional")
    if counts.size and counts.dtype.kind not in "iu":
        raise TypeMismatch(f"counts must be integers, got {counts.dtype}")
    counts = counts.astype(np.int64, copy=False)
    if np.any(counts < 0):
        raise NegativeCount("counts must be non-negative")
    content = as_flat(content)
    total = int(counts.sum())
    if total != content.shape[0]:
        raise CountMismatch(f"counts sum to {total} but content has {content.shape[0]} elements")
    offsets = np.zeros(counts.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return JaggedArray(offsets, content)


def from_lists(lists: Sequence[Sequence], dtype=None) -> JaggedArray:
    counts = [len(x) for x in lists]
    flat_values = [v for sub in lists for v in sub]
    if dtype is None and not flat_values:
        dtype = np.float64
    return from_counts(np.asarray(counts, dtype=np.int64), as_flat(flat_values, dtype=dtype))


def flatten(j: JaggedArray) -> np.ndarray:
    return j.content


def local_index(j: JaggedArray) -> JaggedArray:
    """Per-sublist positions 0..k-1, with ``j``'s offsets."""
    starts = np.repeat(j.offsets[:-1], j.counts)
    return JaggedArray(j.offsets, np.arange(j.content.shape[0], dtype=np.int64) - starts)


def broadcast_to_jagged(x: np.ndarray, like: JaggedArray) -> JaggedArray:
    x = as_flat(x)
    if x.shape[0] != like.n_events:
        raise LengthMismatch(f"flat length {x.shape[0]} != {like.n_events} events")
    return JaggedArray(like.offsets, np.repeat(x, like.counts))


def _scalar(x):
    if isinstance(x, (bool, np.bool_)):
        return np.bool_(x)
    if isinstance(x, numbers.Integral):
        return np.int64(x)
    if isinstance(x, numbers.Real):
        return np.float64(x)
    raise TypeMismatch(f"unsupported operand {type(x).__name__}")


def _check_dtypes(op, a: np.dtype, b: np.dtype):
    is_bool = (a == np.bool_, b == np.bool_)
    if op in ("and", "or"):
        if not all(is_bool):
            raise TypeMismatch(f"{op!r} requires bool operands, got {a} and {b}")
    elif op == "eq":
        if is_bool[0] != is_bool[1]:
            raise TypeMismatch(f"cannot compare {a} with {b}")
    elif any(is_bool):
        raise TypeMismatch(f"{op!r} requires numeric operands, got {a} and {b}")


def _apply(op, a, b):
    if op == "add":
        return np.add(a, b)
    if op == "sub":
        return np.subtract(a, b)
    if op == "mul":
        return np.multiply(a, b)
    if op == "div":
        if np.result_type(a, b) == np.int64:
            if np.any(np.asarray(b) == 0):
                raise DivisionByZero("integer division by zero")
            return np.floor_divide(a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.true_divide(a, b)
    if op == "lt":
        return np.less(a, b)
    if op == "le":
        return np.less_equal(a, b)
    if op == "gt":
        return np.greater(a, b)
    if op == "ge":
        return np.greater_equal(a, b)
    if op == "eq":
        return np.equal(a, b)
    if op == "and":
        return np.logical_and(a, b)
    if op == "or":
        return np.logical_or(a, b)
    raise ValueError(f"unknown elementwise op {op!r}")


def elementwise(op: str, lhs, rhs):
    """Apply a binary op with jagged broadcasting.

    jagged op jagged needs identical offsets; jagged op flat replicates
    flat value ``i`` across sublist ``i``; scalars replicate everywhere.
    Integer ``div`` is floor division and raises on a zero divisor;
    float ``div`` follows IEEE-754.
    """
    if op not in ELEMENTWISE_OPS:
        raise ValueError(f"unknown elementwise op {op!r}")
    lj = isinstance(lhs, JaggedArray)
    rj = isinstance(rhs, JaggedArray)
    l_arr = lj or isinstance(lhs, (np.ndarray, list, tuple))
    r_arr = rj or isinstance(rhs, (np.ndarray, list, tuple))
    if not (l_arr or r_arr):
        raise TypeMismatch("elementwise needs at least one array operand")

    def operand(x, is_jagged, is_array):
        if is_jagged:
            return x.content
        if is_array:
            return as_flat(x)
        return _scalar(x)

    a = operand(lhs, lj, l_arr)
    b = operand(rhs, rj, r_arr)
    _check_dtypes(op, a.dtype, b.dtype)

    if lj and rj:
        if not np.array_equal(lhs.offsets, rhs.offsets):
            raise StructureMismatch("jagged operands have different offsets")
        return JaggedArray(lhs.offsets, _apply(op, a, b))
    if lj or rj:
        jag = lhs if lj else rhs
        if l_arr and r_arr:
            flat = b if lj else a
            if flat.shape[0] != jag.n_events:
                raise LengthMismatch(
                    f"flat operand has {flat.shape[0]} entries, jagged has {jag.n_events} events"
                )
            flat = np.repeat(flat, jag.counts)
            a, b = (a, flat) if lj else (flat, b)
        return JaggedArray(jag.offsets, _apply(op, a, b))
    if l_arr and r_arr and a.shape[0] != b.shape[0]:
        raise LengthMismatch(f"flat operands have lengths {a.shape[0]} and {b.shape[0]}")
    return as_flat(_apply(op, a, b))


def unary(fn, x):
    """Apply a numpy ufunc (``np.cosh``, ``np.sqrt``, ...) to each element."""
    if isinstance(x, JaggedArray):
        return JaggedArray(x.offsets, as_flat(fn(x.content)))
    return as_flat(fn(as_flat(x)))


def _positional(j: JaggedArray, out: np.ndarray, combine, seed_first: bool):
    """Fold each sublist left to right, one element position at a time."""
    counts = j.counts
    starts = j.offsets[:-1]
    content = j.content
    maxc = int(counts.max()) if counts.size else 0
    for p in range(maxc):
        sel = np.flatnonzero(counts > p)
        vals = content[starts[sel] + p]
        if p == 0 and seed_first:
            out[sel] = vals
        else:
            out[sel] = combine(out[sel], vals)
    return out


def reduce(kind: str, j: JaggedArray, empty_default=None) -> np.ndarray:
    if kind not in REDUCE_KINDS:
        raise ValueError(f"unknown reduction {kind!r}")
    n = j.n_events
    counts = j.counts
    if kind == "count":
        return as_flat(counts.astype(np.int64))
    if kind in ("any", "all"):
        if j.dtype != np.bool_:
            raise TypeMismatch(f"{kind!r} requires a bool array, got {j.dtype}")
        if kind == "any":
            out = _positional(j, np.zeros(n, dtype=np.bool_), np.logical_or, False)
        else:
            out = _positional(j, np.ones(n, dtype=np.bool_), np.logical_and, False)
        return as_flat(out)
    if kind == "sum":
        dtype = np.int64 if j.dtype == np.bool_ else j.dtype
        src = j if j.dtype != np.bool_ else JaggedArray(j.offsets, j.content.astype(np.int64))
        return as_flat(_positional(src, np.zeros(n, dtype=dtype), np.add, False))
    # max / min
    if j.dtype == np.bool_:
        raise TypeMismatch(f"{kind!r} requires a numeric array")
    empty = counts == 0
    if np.any(empty):
        if empty_default is None:
            first = int(np.flatnonzero(empty)[0])
            raise MissingDefault(f"{kind} over empty sublist (event {first}) needs empty_default")
        out = np.full(n, empty_default, dtype=j.dtype)
    else:
        out = np.zeros(n, dtype=j.dtype)
    # keep the running value on ties so -0.0/0.0 and NaN behave like a scalar loop
    if kind == "max":
        def combine(acc, x): return np.where(x > acc, x, acc)
    else:
        def combine(acc, x): return np.where(x < acc, x, acc)
    return as_flat(_positional(j, out, combine, True))


def compress_inner(j: JaggedArray, mask: JaggedArray) -> JaggedArray:
    if not isinstance(mask, JaggedArray):
        raise TypeMismatch("compress_inner needs a jagged bool mask")
    if mask.dtype != np.bool_:
        raise TypeMismatch("mask must be bool")
    if not np.array_equal(j.offsets, mask.offsets):
        raise StructureMismatch("mask offsets differ from array offsets")
    keep = mask.content
    new_counts = reduce("sum", mask)
    return from_counts(new_counts, j.content[keep])


def _event_mask(mask) -> np.ndarray:
    mask = as_flat(mask)
    if mask.size == 0:
        return as_flat(np.zeros(0, dtype=np.bool_))
    return mask


def select_events(x, mask):
    mask = _event_mask(mask)
    if mask.dtype != np.bool_:
        raise TypeMismatch("event mask must be bool")
    if isinstance(x, JaggedArray):
        if mask.shape[0] != x.n_events:
            raise LengthMismatch(f"mask length {mask.shape[0]} != {x.n_events} events")
        counts = x.counts
        elem_mask = np.repeat(mask, counts)
        return from_counts(counts[mask], x.content[elem_mask])
    x = as_flat(x)
    if mask.shape[0] != x.shape[0]:
        raise LengthMismatch(f"mask length {mask.shape[0]} != {x.shape[0]} events")
    return as_flat(x[mask])


def distinct_pairs(j: JaggedArray) -> tuple[JaggedArray, JaggedArray]:
    """Local index pairs (i, j), i < j, in lexicographic order per event."""
    counts = j.counts
    pair_counts = counts * (counts - 1) // 2
    offsets = np.zeros(counts.shape[0] + 1, dtype=np.int64)
    np.cumsum(pair_counts, out=offsets[1:])
    total = int(offsets[-1])
    left = np.empty(total, dtype=np.int64)
    right = np.empty(total, dtype=np.int64)
    for k in np.unique(counts):
        k = int(k)
        if k < 2:
            continue
        events = np.flatnonzero(counts == k)
        li, ri = np.triu_indices(k, 1)
        npairs = li.shape[0]
        pos = (offsets[events][:, None] + np.arange(npairs)[None, :]).ravel()
        left[pos] = np.tile(li, events.shape[0])
        right[pos] = np.tile(ri, events.shape[0])
    return JaggedArray(offsets, left), JaggedArray(offsets, right)


def gather_inner(j: JaggedArray, idx: JaggedArray) -> JaggedArray:
    if not isinstance(idx, JaggedArray) or idx.dtype != np.int64:
        raise TypeMismatch("gather_inner needs a jagged int64 index")
    if idx.n_events != j.n_events:
        raise LengthMismatch(f"index has {idx.n_events} events, array has {j.n_events}")
    local = idx.content
    event = np.repeat(np.arange(idx.n_events, dtype=np.int64), idx.counts)
    limit = j.counts[event]
    bad = (local < 0) | (local >= limit)
    if np.any(bad):
        pos = int(np.flatnonzero(bad)[0])
        raise IndexOutOfBounds(int(event[pos]), int(local[pos]), int(limit[pos]))
    return JaggedArray(idx.offsets, j.content[j.offsets[:-1][event] + local])
