"""Event tables and structure-of-arrays collections.

An :class:`EventTable` is the chunk of columns handed to a processor. Column
names are flat strings; the dotted convention (``Muon.pt``) is only used to
group jagged columns into a :class:`Collection` such as ``table.collection("Muon")``.
"""
from __future__ import annotations

import re
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import jagged as jg
from .errors import (
    DuplicateName,
    EmptyFieldSet,
    InvalidName,
    LengthMismatch,
    StructureMismatch,
    TypeMismatch,
)
from .jagged import JaggedArray

NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")


def check_name(name: str) -> str:
    if not isinstance(name, str) or not NAME_RE.match(name):
        raise InvalidName(f"invalid column name {name!r}")
    return name


def _n_rows(col) -> int:
    return col.n_events if isinstance(col, JaggedArray) else col.shape[0]


def _coerce(col):
    return col if isinstance(col, JaggedArray) else jg.as_flat(col)


class Collection:
    """Named jagged fields sharing one offsets array, viewed as records."""

    __slots__ = ("_name", "_fields")

    def __init__(self, name: str, fields: Mapping[str, JaggedArray]):
        if not fields:
            raise EmptyFieldSet(f"collection {name!r} needs at least one field")
        items = list(fields.items())
        ref = None
        for key, arr in items:
            if not isinstance(arr, JaggedArray):
                raise TypeMismatch(f"field {key!r} of {name!r} is not jagged")
            if ref is None:
                ref = arr.offsets
            elif not np.array_equal(ref, arr.offsets):
                raise StructureMismatch(f"field {key!r} of {name!r} has different offsets")
        # share one offsets object across fields
        self._fields = {k: JaggedArray(ref, a.content) for k, a in items}
        self._name = name

    @property
    def name(self) -> str:
        return self._name

    @property
    def fields(self) -> Mapping[str, JaggedArray]:
        return MappingProxyType(self._fields)

    @property
    def offsets(self) -> np.ndarray:
        return next(iter(self._fields.values())).offsets

    @property
    def counts(self) -> np.ndarray:
        return next(iter(self._fields.values())).counts

    @property
    def n_events(self) -> int:
        return len(self.offsets) - 1

    def __len__(self):
        return self.n_events

    def __getitem__(self, key):
        if isinstance(key, str):
            return self._fields[key]
        if isinstance(key, JaggedArray):
            return mask_collection(self, key)
        return Collection(self._name, {k: jg.select_events(v, key) for k, v in self._fields.items()})

    def __getattr__(self, key):
        if key.startswith("_"):
            raise AttributeError(key)
        try:
            return self._fields[key]
        except KeyError:
            raise AttributeError(f"collection {self._name!r} has no field {key!r}") from None

    def __repr__(self):
        return f"<Collection {self._name} fields={list(self._fields)} n_events={self.n_events}>"


def zip_collection(name: str, fields: Mapping[str, JaggedArray]) -> Collection:
    return Collection(name, fields)


def mask_collection(c: Collection, mask: JaggedArray) -> Collection:
    if not isinstance(mask, JaggedArray) or mask.dtype != np.bool_:
        raise TypeMismatch("collection mask must be a jagged bool array")
    if not np.array_equal(mask.offsets, c.offsets):
        raise StructureMismatch("mask offsets differ from collection offsets")
    keep = mask.content
    new_counts = jg.reduce("sum", mask)
    offsets = np.zeros(len(new_counts) + 1, dtype=np.int64)
    np.cumsum(new_counts, out=offsets[1:])
    return Collection(c.name, {k: JaggedArray(offsets, v.content[keep]) for k, v in c.fields.items()})


class EventTable:
    """Immutable mapping of column name to flat or jagged array.

    ``metadata`` carries chunk provenance (file, entry range) and is not a column.
    """

    __slots__ = ("_n_events", "_columns", "_metadata")

    def __init__(self, columns: Mapping, n_events: int, metadata: Mapping | None = None):
        n_events = int(n_events)
        if n_events < 0:
            raise LengthMismatch("n_events must be non-negative")
        cols = {}
        for name, col in columns.items():
            check_name(name)
            col = _coerce(col)
            if _n_rows(col) != n_events:
                raise LengthMismatch(
                    f"column {name!r} has {_n_rows(col)} events, table has {n_events}"
                )
            cols[name] = col
        self._n_events = n_events
        self._columns = cols
        self._metadata = dict(metadata or {})

    @property
    def metadata(self) -> Mapping:
        return MappingProxyType(self._metadata)

    @property
    def n_events(self) -> int:
        return self._n_events

    @property
    def columns(self) -> Mapping:
        return MappingProxyType(self._columns)

    def names(self) -> list[str]:
        return list(self._columns)

    def __len__(self):
        return self._n_events

    def __contains__(self, name):
        return name in self._columns

    def __getitem__(self, name):
        return self._columns[name]

    def with_column(self, name: str, col) -> "EventTable":
        return with_column(self, name, col)

    def select(self, mask) -> "EventTable":
        return select_table(self, mask)

    def collection(self, prefix: str) -> Collection:
        """Zip every ``prefix.field`` jagged column into one collection."""
        head = prefix + "."
        fields = {
            name[len(head):]: col
            for name, col in self._columns.items()
            if name.startswith(head) and isinstance(col, JaggedArray)
        }
        return Collection(prefix, fields)

    def __repr__(self):
        return f"<EventTable n_events={self._n_events} columns={list(self._columns)}>"


def table_from_columns(cols, n_events: int) -> EventTable:
    """Build a table; ``cols`` may be a mapping or a sequence of (name, array)."""
    if isinstance(cols, Mapping):
        pairs = list(cols.items())
    else:
        pairs = list(cols)
    seen = set()
    for name, _ in pairs:
        if name in seen:
            raise DuplicateName(f"duplicate column {name!r}")
        seen.add(name)
    return EventTable(dict(pairs), n_events)


def with_column(t: EventTable, name: str, col) -> EventTable:
    check_name(name)
    col = _coerce(col)
    if _n_rows(col) != t.n_events:
        raise LengthMismatch(f"column {name!r} has {_n_rows(col)} events, table has {t.n_events}")
    cols = dict(t.columns)
    cols[name] = col
    return EventTable(cols, t.n_events, t.metadata)


def select_table(t: EventTable, mask) -> EventTable:
    mask = jg._event_mask(mask)
    if mask.shape[0] != t.n_events:
        raise LengthMismatch(f"mask length {mask.shape[0]} != {t.n_events} events")
    cols = {k: jg.select_events(v, mask) for k, v in t.columns.items()}
    return EventTable(cols, int(np.count_nonzero(mask)), t.metadata)
