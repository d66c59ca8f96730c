"""CFPK chunked columnar files, dataset manifests and chunk planning.

File layout (all little-endian)::

    b"CFPK" | u32 version=1 | u64 header_len | header JSON
    row group 0 | row group 1 | ...

The header JSON is ``{"columns": [{"name", "dtype", "layout"}...],
"row_groups": [{"n_events"}...]}``. Each row group stores its columns in
schema order: a flat column is ``n_events`` elements; a jagged column is
``u32 counts[n_events]``, ``u64 content_len`` and then the content elements.
Elements are f64 (binary64), i64 (two's complement) or bool (u8 0/1).

Readers only touch the byte ranges of the columns and row groups they are
asked for. The ``content_len`` words are framing metadata and are read when
the schema is loaded; everything else is payload.
"""
from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    BadMagic,
    LengthMismatch,
    MalformedHeader,
    RangeOutOfBounds,
    SchemaMismatch,
    UnknownColumn,
    UnsupportedVersion,
)
from .jagged import JaggedArray, as_flat, from_counts
from .records import EventTable, NAME_RE

MAGIC = b"CFPK"
VERSION = 1
PREAMBLE = struct.Struct("<4sIQ")

_ENCODING = {"f64": np.dtype("<f8"), "i64": np.dtype("<i8"), "bool": np.dtype("u1")}
_NATIVE = {"f64": np.dtype(np.float64), "i64": np.dtype(np.int64), "bool": np.dtype(np.bool_)}
_COUNTS = np.dtype("<u4")

Opener = Callable[[str], "object"]


def open_file(path: str):
    """Default opener for every CFPK read; tests swap it for a counting shim."""
    return open(path, "rb")


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    dtype: str
    layout: str

    def __post_init__(self):
        if not isinstance(self.name, str) or not NAME_RE.match(self.name):
            raise SchemaMismatch(f"invalid column name {self.name!r}")
        if self.dtype not in _ENCODING:
            raise SchemaMismatch(f"column {self.name!r}: unknown dtype {self.dtype!r}")
        if self.layout not in ("flat", "jagged"):
            raise SchemaMismatch(f"column {self.name!r}: unknown layout {self.layout!r}")

    @property
    def itemsize(self) -> int:
        return _ENCODING[self.dtype].itemsize

    def to_dict(self) -> dict:
        return {"name": self.name, "dtype": self.dtype, "layout": self.layout}


@dataclass(frozen=True)
class ColumnSpan:
    """Byte extents of one column inside one row group."""

    counts_start: int
    counts_len: int
    content_start: int
    content_len: int  # elements
    content_nbytes: int = 0

    @property
    def payload_ranges(self) -> list[tuple[int, int]]:
        """[start, stop) byte ranges holding payload (counts and elements)."""
        return [(self.counts_start, self.counts_start + self.counts_len),
                (self.content_start, self.content_start + self.content_nbytes)]


@dataclass(frozen=True)
class RowGroupMeta:
    n_events: int
    offset: int
    first_event: int = 0
    spans: tuple = ()


@dataclass(frozen=True)
class FileInfo:
    schema: tuple
    row_groups: tuple
    total_events: int
    header_bytes: bytes = field(repr=False, default=b"")
    file_size: int = 0

    def __iter__(self) -> Iterator:
        # allows ``schema, groups, total = read_schema(path)``
        return iter((self.schema, self.row_groups, self.total_events))

    def column(self, name: str) -> ColumnSchema:
        for c in self.schema:
            if c.name == name:
                return c
        raise UnknownColumn(f"unknown column {name!r}")

    def names(self) -> list[str]:
        return [c.name for c in self.schema]


def _column_schema(col, name) -> ColumnSchema:
    if isinstance(col, JaggedArray):
        layout, dt = "jagged", col.dtype
    else:
        layout, dt = "flat", np.asarray(col).dtype
    for code, native in _NATIVE.items():
        if native == dt:
            return ColumnSchema(name, code, layout)
    raise SchemaMismatch(f"column {name!r}: unsupported dtype {dt}")


def schema_of(table: EventTable) -> list[ColumnSchema]:
    return [_column_schema(col, name) for name, col in table.columns.items()]


def _encode(values: np.ndarray, code: str) -> bytes:
    return np.ascontiguousarray(values, dtype=_ENCODING[code]).tobytes()


def write_file(path, schema: Sequence[ColumnSchema], groups: Sequence[EventTable]):
    """Write row groups; every group must match ``schema`` exactly, in order."""
    schema = [c if isinstance(c, ColumnSchema) else ColumnSchema(**c) for c in schema]
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaMismatch("duplicate column names in schema")
    for gi, g in enumerate(groups):
        got = schema_of(g)
        if got != schema:
            raise SchemaMismatch(
                f"row group {gi}: columns {[(c.name, c.dtype, c.layout) for c in got]} "
                f"do not match schema {[(c.name, c.dtype, c.layout) for c in schema]}"
            )
    header = {
        "columns": [c.to_dict() for c in schema],
        "row_groups": [{"n_events": g.n_events} for g in groups],
    }
    hbytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "wb") as f:
            f.write(PREAMBLE.pack(MAGIC, VERSION, len(hbytes)))
            f.write(hbytes)
            for g in groups:
                for c in schema:
                    col = g[c.name]
                    if c.layout == "flat":
                        f.write(_encode(col, c.dtype))
                    else:
                        counts = col.counts
                        if counts.size and counts.max() > 0xFFFFFFFF:
                            raise SchemaMismatch(f"column {c.name!r}: sublist too long for u32 counts")
                        f.write(np.ascontiguousarray(counts, dtype=_COUNTS).tobytes())
                        f.write(struct.pack("<Q", col.content.shape[0]))
                        f.write(_encode(col.content, c.dtype))
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise MalformedHeader(f"truncated file while reading {what}")
    return data


def _parse_header(raw: bytes) -> tuple[list[ColumnSchema], list[int]]:
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedHeader(f"header is not valid JSON: {e}") from None
    if not isinstance(header, dict):
        raise MalformedHeader("header must be a JSON object")
    cols = header.get("columns")
    groups = header.get("row_groups")
    if not isinstance(cols, list) or not isinstance(groups, list):
        raise MalformedHeader("header needs 'columns' and 'row_groups' lists")
    schema = []
    for i, c in enumerate(cols):
        if not isinstance(c, dict):
            raise MalformedHeader(f"columns[{i}] is not an object")
        try:
            schema.append(ColumnSchema(c.get("name"), c.get("dtype"), c.get("layout")))
        except SchemaMismatch as e:
            raise MalformedHeader(f"columns[{i}]: {e}") from None
    if len({c.name for c in schema}) != len(schema):
        raise MalformedHeader("duplicate column names")
    sizes = []
    for i, g in enumerate(groups):
        n = g.get("n_events") if isinstance(g, dict) else None
        if not isinstance(n, int) or isinstance(n, bool) or n < 0:
            raise MalformedHeader(f"row_groups[{i}].n_events must be a non-negative integer")
        sizes.append(n)
    return schema, sizes


def _scan(f, path) -> FileInfo:
    f.seek(0, os.SEEK_END)
    size = f.tell()
    f.seek(0)
    pre = f.read(PREAMBLE.size)
    if len(pre) < 4 or pre[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic (not a CFPK file)")
    if len(pre) < PREAMBLE.size:
        raise MalformedHeader(f"{path}: truncated preamble")
    _, version, hlen = PREAMBLE.unpack(pre)
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: unsupported version {version}")
    if PREAMBLE.size + hlen > size:
        raise MalformedHeader(f"{path}: header length {hlen} exceeds file size")
    hraw = _read_exact(f, hlen, "header")
    schema, sizes = _parse_header(hraw)

    pos = PREAMBLE.size + hlen
    groups = []
    first = 0
    for n in sizes:
        start = pos
        spans = []
        for c in schema:
            if c.layout == "flat":
                nbytes = n * c.itemsize
                spans.append(ColumnSpan(pos, 0, pos, n, nbytes))
                pos += nbytes
            else:
                counts_start = pos
                pos += n * _COUNTS.itemsize
                if pos + 8 > size:
                    raise MalformedHeader(f"{path}: truncated row group")
                f.seek(pos)
                (clen,) = struct.unpack("<Q", _read_exact(f, 8, "content length"))
                pos += 8
                nbytes = clen * c.itemsize
                spans.append(ColumnSpan(counts_start, n * _COUNTS.itemsize, pos, clen, nbytes))
                pos += nbytes
            if pos > size:
                raise MalformedHeader(f"{path}: truncated row group")
        groups.append(RowGroupMeta(n, start, first, tuple(spans)))
        first += n
    if pos != size:
        raise MalformedHeader(f"{path}: {size - pos} trailing bytes after last row group")
    preamble_and_header = pre + hraw
    return FileInfo(tuple(schema), tuple(groups), first, preamble_and_header, size)


class CfpkReader:
    """Positioned, column-selective reader over one CFPK file.

    ``payload_bytes_read`` counts only column payload bytes (counts and
    elements), not header or framing words.
    """

    def __init__(self, path, opener: Optional[Opener] = None):
        self.path = str(path)
        self._opener = opener or open_file
        self.payload_bytes_read = 0
        with self._opener(self.path) as f:
            self.info = _scan(f, self.path)

    def _read(self, f, start: int, nbytes: int) -> bytes:
        if nbytes == 0:
            return b""
        f.seek(start)
        data = f.read(nbytes)
        if len(data) != nbytes:
            raise MalformedHeader(f"{self.path}: short read at byte {start}")
        self.payload_bytes_read += nbytes
        return data

    def read_columns(self, names: Sequence[str], entry_start: int = 0, entry_stop: Optional[int] = None) -> EventTable:
        info = self.info
        if entry_stop is None:
            entry_stop = info.total_events
        names = list(names)
        index = {c.name: i for i, c in enumerate(info.schema)}
        for n in names:
            if n not in index:
                raise UnknownColumn(f"{self.path}: unknown column {n!r}")
        if not 0 <= entry_start <= entry_stop <= info.total_events:
            raise RangeOutOfBounds(
                f"range [{entry_start}, {entry_stop}) outside [0, {info.total_events}]"
            )
        parts: dict[str, list] = {n: [] for n in names}
        overlapping = [
            g for g in info.row_groups
            if g.n_events and g.first_event < entry_stop and entry_start < g.first_event + g.n_events
        ]
        with self._opener(self.path) as f:
            for g in overlapping:
                a = max(entry_start, g.first_event) - g.first_event
                b = min(entry_stop, g.first_event + g.n_events) - g.first_event
                for n in names:
                    c = info.schema[index[n]]
                    span = g.spans[index[n]]
                    enc = _ENCODING[c.dtype]
                    if c.layout == "flat":
                        raw = self._read(f, span.content_start + a * enc.itemsize, (b - a) * enc.itemsize)
                        parts[n].append(np.frombuffer(raw, dtype=enc))
                    else:
                        counts = np.frombuffer(self._read(f, span.counts_start, b * _COUNTS.itemsize), dtype=_COUNTS)
                        counts = counts.astype(np.int64)
                        lo = int(counts[:a].sum())
                        hi = lo + int(counts[a:b].sum())
                        if hi > span.content_len:
                            raise MalformedHeader(f"{self.path}: counts exceed content length in column {n!r}")
                        raw = self._read(f, span.content_start + lo * enc.itemsize, (hi - lo) * enc.itemsize)
                        parts[n].append((counts[a:b], np.frombuffer(raw, dtype=enc)))
        cols = {}
        for n in names:
            c = info.schema[index[n]]
            native = _NATIVE[c.dtype]
            if c.layout == "flat":
                vals = np.concatenate(parts[n]) if parts[n] else np.zeros(0, _ENCODING[c.dtype])
                cols[n] = as_flat(vals.astype(native))
            else:
                if parts[n]:
                    counts = np.concatenate([p[0] for p in parts[n]])
                    content = np.concatenate([p[1] for p in parts[n]])
                else:
                    counts = np.zeros(0, np.int64)
                    content = np.zeros(0, _ENCODING[c.dtype])
                cols[n] = from_counts(counts, content.astype(native))
        meta = {"file": self.path, "entry_start": entry_start, "entry_stop": entry_stop}
        return EventTable(cols, entry_stop - entry_start, meta)


def read_schema(path, opener: Optional[Opener] = None) -> FileInfo:
    with (opener or open_file)(str(path)) as f:
        return _scan(f, str(path))


def read_columns(path, names: Sequence[str], entry_start: int = 0, entry_stop: Optional[int] = None,
                 opener: Optional[Opener] = None) -> EventTable:
    return CfpkReader(path, opener).read_columns(names, entry_start, entry_stop)


def fnv1a64(data: bytes, h: int = 0xCBF29CE484222325) -> int:
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def file_digest(info: FileInfo) -> int:
    """FNV-1a 64 over the preamble+header bytes, then the file size as u64 LE."""
    return fnv1a64(struct.pack("<Q", info.file_size), fnv1a64(info.header_bytes))


# manifests and chunk planning


@dataclass(frozen=True)
class Manifest:
    datasets: Mapping[str, tuple]

    def __post_init__(self):
        clean = {}
        for name, files in self.datasets.items():
            if not isinstance(name, str) or not name:
                raise ValueError(f"invalid dataset name {name!r}")
            files = tuple(str(f) for f in files)
            if not files:
                raise ValueError(f"dataset {name!r} lists no files")
            clean[name] = files
        object.__setattr__(self, "datasets", clean)

    def to_dict(self) -> dict:
        return {"datasets": {k: list(v) for k, v in self.datasets.items()}}


def _no_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ValueError(f"duplicate key {k!r}")
        seen[k] = v
    return seen


def load_manifest(path) -> Manifest:
    """Read a manifest; relative file paths resolve against the manifest's directory."""
    base = Path(path).resolve().parent
    with open(path) as f:
        try:
            raw = json.load(f, object_pairs_hook=_no_duplicates)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: invalid manifest JSON: {e}") from None
    if not isinstance(raw, dict) or not isinstance(raw.get("datasets"), dict):
        raise ValueError(f"{path}: manifest needs a 'datasets' object")
    datasets = {}
    for name, files in raw["datasets"].items():
        if not isinstance(files, list) or not all(isinstance(p, str) for p in files):
            raise ValueError(f"{path}: dataset {name!r} must list file paths")
        datasets[name] = [str(base / p) if not os.path.isabs(p) else p for p in files]
    return Manifest(datasets)


def save_manifest(manifest: Manifest, path):
    with open(path, "w") as f:
        json.dump(manifest.to_dict(), f, indent=2)
        f.write("\n")


@dataclass(frozen=True)
class WorkItem:
    dataset: str
    file: str
    entry_start: int
    entry_stop: int
    chunk_index: int

    @property
    def n_events(self) -> int:
        return self.entry_stop - self.entry_start


def plan_chunks(manifest: Manifest, target_events_per_chunk: int,
                opener: Optional[Opener] = None) -> list[WorkItem]:
    if target_events_per_chunk <= 0:
        raise ValueError("target_events_per_chunk must be positive")
    items = []
    for dataset, files in manifest.datasets.items():
        for path in files:
            total = read_schema(path, opener).total_events
            for start in range(0, total, target_events_per_chunk):
                stop = min(start + target_events_per_chunk, total)
                items.append(WorkItem(dataset, path, start, stop, len(items)))
    return items


# toy data

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1


class SplitMix64:
    """Scalar splitmix64 stream."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def splitmix64_block(seed: int, start: int, count: int) -> np.ndarray:
    """Stream values ``start .. start+count-1`` (0-based draw numbers)."""
    i = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(seed & MASK64) + i * np.uint64(GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


TOY_SCHEMA = (
    ColumnSchema("Muon.pt", "f64", "jagged"),
    ColumnSchema("Muon.eta", "f64", "jagged"),
    ColumnSchema("Muon.phi", "f64", "jagged"),
    ColumnSchema("Muon.charge", "i64", "jagged"),
    ColumnSchema("MET", "f64", "flat"),
)

_MAX_DRAWS_PER_EVENT = 1 + 4 * 4 + 1


def _toy_group(seed: int, pos: int, n: int) -> tuple[EventTable, int]:
    block = splitmix64_block(seed, pos, n * _MAX_DRAWS_PER_EVENT)
    mod5 = (block % np.uint64(5)).tolist()
    starts = np.empty(n, dtype=np.int64)
    ks = np.empty(n, dtype=np.int64)
    p = 0
    for e in range(n):
        k = mod5[p]
        starts[e] = p
        ks[e] = k
        p += 2 + 4 * k
    muon_event_start = np.repeat(starts, ks)
    # muon position within its event
    offs = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(ks, out=offs[1:])
    local = np.arange(offs[-1], dtype=np.int64) - np.repeat(offs[:-1], ks)
    base = muon_event_start + 1 + 4 * local
    pt = 15.0 + (block[base] % np.uint64(8000)).astype(np.float64) / 100.0
    eta = -2.4 + 4.8 * (block[base + 1] % np.uint64(10000)).astype(np.float64) / 10000.0
    phi = -math.pi + 2.0 * math.pi * (block[base + 2] % np.uint64(10000)).astype(np.float64) / 10000.0
    charge = np.where(block[base + 3] % np.uint64(2) == 0, 1, -1).astype(np.int64)
    met = (block[starts + 1 + 4 * ks] % np.uint64(20000)).astype(np.float64) / 100.0
    cols = {
        "Muon.pt": from_counts(ks, pt),
        "Muon.eta": from_counts(ks, eta),
        "Muon.phi": from_counts(ks, phi),
        "Muon.charge": from_counts(ks, charge),
        "MET": met,
    }
    return EventTable(cols, n), pos + p


def toy_tables(seed: int, n_events: int, row_group_size: int = 10_000) -> list[EventTable]:
    if n_events < 0:
        raise LengthMismatch("n_events must be non-negative")
    if row_group_size <= 0:
        raise ValueError("row_group_size must be positive")
    groups = []
    pos = 0
    done = 0
    while done < n_events:
        n = min(row_group_size, n_events - done)
        table, pos = _toy_group(seed, pos, n)
        groups.append(table)
        done += n
    return groups


def generate_toy(path, seed: int, n_events: int, row_group_size: int = 10_000):
    """Write a deterministic toy dimuon file.

    Per event the stream yields k (muon count, ``s % 5``), then pt, eta, phi
    and charge for each muon, then MET.
    """
    write_file(path, TOY_SCHEMA, toy_tables(seed, n_events, row_group_size))
