"""Reducible values: an identity plus an associative merge.

Five variants exist: :class:`Counter` (float), :class:`IntCounter`,
:class:`~chunkwise.hist.Histogram`, :class:`SetAcc` and :class:`Namespace`
(an ordered, nestable mapping of the others). Merging never mutates its
inputs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

from . import hist as _hist
from .errors import IncompatibleAxes, MalformedPayload, ShapeMismatch
from .hexfloat import hex64, unhex64
from .hist import Histogram

MAX_DEPTH = 16


@dataclass(frozen=True)
class Counter:
    value: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    def __add__(self, other):
        return merge_acc(self, other)


@dataclass(frozen=True)
class IntCounter:
    value: int = 0

    def __post_init__(self):
        object.__setattr__(self, "value", int(self.value))

    def __add__(self, other):
        return merge_acc(self, other)


@dataclass(frozen=True)
class SetAcc:
    items: frozenset = frozenset()

    def __init__(self, items: Iterable[str] = ()):
        items = frozenset(items)
        if not all(isinstance(s, str) for s in items):
            raise TypeError("SetAcc holds strings only")
        object.__setattr__(self, "items", items)

    def __contains__(self, item):
        return item in self.items

    def __len__(self):
        return len(self.items)

    def __add__(self, other):
        return merge_acc(self, other)


class Namespace(Mapping):
    """Ordered name -> accumulator mapping; nesting depth is capped at 16."""

    def __init__(self, items: Union[Mapping, Iterable] = ()):
        data = dict(items)
        for key, val in data.items():
            if not isinstance(key, str):
                raise TypeError(f"namespace keys must be strings, got {key!r}")
            if not isinstance(val, ACC_TYPES):
                raise TypeError(f"{key!r}: {type(val).__name__} is not an accumulator")
        self._data = data
        if self.depth() > MAX_DEPTH:
            raise ValueError(f"namespace nesting exceeds {MAX_DEPTH}")

    def depth(self) -> int:
        inner = [v.depth() for v in self._data.values() if isinstance(v, Namespace)]
        return 1 + max(inner, default=0)

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __eq__(self, other):
        if not isinstance(other, Namespace) or list(self._data) != list(other._data):
            return False
        return all(self._data[k] == other._data[k] for k in self._data)

    __hash__ = None

    def __add__(self, other):
        return merge_acc(self, other)

    def __repr__(self):
        return f"Namespace({self._data!r})"


ACC_TYPES = (Counter, IntCounter, Histogram, SetAcc, Namespace)
Accumulator = Union[Counter, IntCounter, Histogram, SetAcc, Namespace]


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def identity_of(a: Accumulator) -> Accumulator:
    if isinstance(a, Counter):
        return Counter(0.0)
    if isinstance(a, IntCounter):
        return IntCounter(0)
    if isinstance(a, SetAcc):
        return SetAcc()
    if isinstance(a, Histogram):
        return a.empty_like()
    if isinstance(a, Namespace):
        return Namespace({k: identity_of(v) for k, v in a.items()})
    raise TypeError(f"not an accumulator: {type(a).__name__}")


def check_shape(a: Accumulator, b: Accumulator, path: str = ""):
    """Raise ShapeMismatch unless ``a`` and ``b`` can be merged."""
    if type(a) is not type(b):
        raise ShapeMismatch(f"variant {type(a).__name__} vs {type(b).__name__}", path)
    if isinstance(a, Histogram):
        try:
            _hist.check_compatible(a, b)
        except IncompatibleAxes as e:
            raise ShapeMismatch(f"histograms incompatible: {e}", path) from None
    elif isinstance(a, Namespace):
        for k in a:
            if k not in b:
                raise ShapeMismatch("key missing on the right", _join(path, k))
        for k in b:
            if k not in a:
                raise ShapeMismatch("key missing on the left", _join(path, k))
        for k in a:
            check_shape(a[k], b[k], _join(path, k))


def _merge(a, b, path):
    if isinstance(a, Counter):
        return Counter(a.value + b.value)
    if isinstance(a, IntCounter):
        return IntCounter(a.value + b.value)
    if isinstance(a, SetAcc):
        return SetAcc(a.items | b.items)
    if isinstance(a, Histogram):
        return _hist.merge(a, b)
    return Namespace({k: _merge(a[k], b[k], _join(path, k)) for k in a})


def merge_acc(a: Accumulator, b: Accumulator) -> Accumulator:
    check_shape(a, b)
    return _merge(a, b, "")


# JSON payloads


def to_json_obj(a: Accumulator):
    if isinstance(a, Counter):
        return hex64(a.value)
    if isinstance(a, IntCounter):
        return a.value
    if isinstance(a, SetAcc):
        return sorted(a.items)
    if isinstance(a, Histogram):
        return _hist.to_dict(a)
    if isinstance(a, Namespace):
        return {k: to_json_obj(v) for k, v in a.items()}
    raise TypeError(f"not an accumulator: {type(a).__name__}")


_HIST_KEYS = ["version", "axes", "sumw", "sumw2"]


def _looks_like_hist(obj: dict) -> bool:
    return list(obj) == _HIST_KEYS and isinstance(obj["version"], int)


def from_json_obj(obj, path: str = "", depth: int = 1) -> Accumulator:
    if isinstance(obj, bool):
        raise MalformedPayload("booleans are not accumulators", field=path or "<root>")
    if isinstance(obj, int):
        return IntCounter(obj)
    if isinstance(obj, str):
        try:
            return Counter(unhex64(obj))
        except ValueError:
            raise MalformedPayload("bad hex64 counter", field=path or "<root>") from None
    if isinstance(obj, list):
        if not all(isinstance(s, str) for s in obj):
            raise MalformedPayload("set entries must be strings", field=path or "<root>")
        return SetAcc(obj)
    if isinstance(obj, dict):
        if _looks_like_hist(obj):
            try:
                return _hist.from_dict(obj)
            except MalformedPayload as e:
                raise MalformedPayload(str(e), field=path or "<root>") from None
        if depth > MAX_DEPTH:
            raise MalformedPayload(f"nesting deeper than {MAX_DEPTH}", field=path)
        return Namespace({k: from_json_obj(v, _join(path, k), depth + 1) for k, v in obj.items()})
    raise MalformedPayload(f"unexpected {type(obj).__name__}", field=path or "<root>")


def dumps(a: Accumulator) -> bytes:
    return json.dumps(to_json_obj(a), separators=(",", ":")).encode("utf-8")


def loads(payload) -> Accumulator:
    try:
        text = payload.decode("utf-8") if isinstance(payload, (bytes, bytearray)) else payload
        obj = json.loads(text)
    except UnicodeDecodeError as e:
        raise MalformedPayload("payload is not UTF-8", position=e.start) from None
    except json.JSONDecodeError as e:
        raise MalformedPayload(f"invalid JSON: {e.msg}", position=e.pos) from None
    return from_json_obj(obj)
