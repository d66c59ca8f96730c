"""Local-disk cache of materialized columns, keyed by file, entry range and expression.

Directory layout::

    <root>/<keystring>.col   one entry per cached array
    <root>/index.json        keystring -> {"bytes": n, "last_access": unix seconds}
    <root>/.lock             advisory lock guarding index.json

The file digest covers only the CFPK preamble, header and file size. A file
rewritten in place with an identical header (same schema, same row-group
sizes and content lengths) defeats it.
"""
from __future__ import annotations

import fcntl
import json
import logging
import os
import re
import struct
import threading
import time
import warnings
from concurrent.futures import Future
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .dataset import FileInfo, file_digest, fnv1a64, read_schema
from .errors import CacheCorrupt
from .jagged import JaggedArray, as_flat, from_counts

log = logging.getLogger(__name__)

_DTYPE_TAG = {np.dtype(np.float64): 0, np.dtype(np.int64): 1, np.dtype(np.bool_): 2}
_TAG_ENC = {0: np.dtype("<f8"), 1: np.dtype("<i8"), 2: np.dtype("u1")}
_TAG_NATIVE = {0: np.dtype(np.float64), 1: np.dtype(np.int64), 2: np.dtype(np.bool_)}
_UNSAFE = re.compile(r"[^A-Za-z0-9_.]")


class CacheCorruptWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CacheKey:
    digest: int
    entry_start: int
    entry_stop: int
    expression: str

    @classmethod
    def for_file(cls, path_or_info: Union[str, os.PathLike, FileInfo], entry_start: int,
                 entry_stop: int, expression: str) -> "CacheKey":
        info = path_or_info if isinstance(path_or_info, FileInfo) else read_schema(path_or_info)
        return cls(file_digest(info), entry_start, entry_stop, expression)

    def keystring(self) -> str:
        readable = _UNSAFE.sub("_", self.expression)[:48]
        tag = fnv1a64(self.expression.encode("utf-8"))
        return f"{self.digest:016x}-{self.entry_start}-{self.entry_stop}-{readable}-{tag:016x}"


def encode_array(arr) -> bytes:
    if isinstance(arr, JaggedArray):
        tag = _DTYPE_TAG[arr.dtype]
        counts = arr.counts
        return b"".join([
            struct.pack("<BBQ", 1, tag, arr.n_events),
            np.ascontiguousarray(counts, dtype="<u4").tobytes(),
            struct.pack("<Q", arr.content.shape[0]),
            np.ascontiguousarray(arr.content, dtype=_TAG_ENC[tag]).tobytes(),
        ])
    arr = as_flat(arr)
    tag = _DTYPE_TAG[arr.dtype]
    return struct.pack("<BBQ", 0, tag, arr.shape[0]) + np.ascontiguousarray(arr, dtype=_TAG_ENC[tag]).tobytes()


def decode_array(data: bytes):
    if len(data) < 10:
        raise CacheCorrupt("entry shorter than its preamble")
    layout, tag, n = struct.unpack_from("<BBQ", data, 0)
    if layout not in (0, 1) or tag not in _TAG_ENC:
        raise CacheCorrupt(f"bad layout/dtype tags {layout}/{tag}")
    enc = _TAG_ENC[tag]
    pos = 10
    if layout == 0:
        if len(data) != pos + n * enc.itemsize:
            raise CacheCorrupt("flat entry has wrong length")
        return as_flat(np.frombuffer(data, dtype=enc, offset=pos, count=n).astype(_TAG_NATIVE[tag]))
    if len(data) < pos + 4 * n + 8:
        raise CacheCorrupt("jagged entry truncated")
    counts = np.frombuffer(data, dtype="<u4", offset=pos, count=n).astype(np.int64)
    pos += 4 * n
    (clen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) != pos + clen * enc.itemsize or int(counts.sum()) != clen:
        raise CacheCorrupt("jagged entry has inconsistent lengths")
    content = np.frombuffer(data, dtype=enc, offset=pos, count=clen).astype(_TAG_NATIVE[tag])
    return from_counts(counts, content)


class ColumnCache:
    """Read-through cache; safe for concurrent use by threads of one process.

    Concurrent requests for one key run the producer once; the other callers
    wait for its result. Index updates take an advisory file lock so worker
    processes of one run can share a cache directory.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._index_path = self.root / "index.json"
        self._lock_path = self.root / ".lock"
        self._mutex = threading.Lock()
        self._inflight: dict[str, Future] = {}
        self.hits = 0
        self.misses = 0

    def __getstate__(self):
        return {"root": str(self.root)}

    def __setstate__(self, state):
        self.__init__(state["root"])

    def entry_path(self, key: CacheKey) -> Path:
        return self.root / f"{key.keystring()}.col"

    @contextmanager
    def _index(self):
        """Yield the index dict under the file lock and write it back."""
        with self._mutex, open(self._lock_path, "a+") as lockf:
            fcntl.flock(lockf, fcntl.LOCK_EX)
            try:
                try:
                    with open(self._index_path) as f:
                        index = json.load(f)
                    if not isinstance(index, dict):
                        index = {}
                except (FileNotFoundError, json.JSONDecodeError):
                    index = {}
                before = json.dumps(index, sort_keys=True)
                yield index
                if json.dumps(index, sort_keys=True) != before:
                    tmp = self._index_path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
                    with open(tmp, "w") as f:
                        json.dump(index, f, sort_keys=True)
                    os.replace(tmp, self._index_path)
            finally:
                fcntl.flock(lockf, fcntl.LOCK_UN)

    def _touch(self, ks: str, nbytes: int):
        with self._index() as index:
            index[ks] = {"bytes": nbytes, "last_access": time.time()}

    def _load(self, key: CacheKey):
        path = self.entry_path(key)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            return None
        try:
            arr = decode_array(data)
        except CacheCorrupt as e:
            msg = f"corrupt cache entry {path.name}: {e}; recomputing"
            log.warning(msg)
            warnings.warn(msg, CacheCorruptWarning, stacklevel=3)
            path.unlink(missing_ok=True)
            with self._index() as index:
                index.pop(key.keystring(), None)
            return None
        self._touch(key.keystring(), len(data))
        return arr

    def _store(self, key: CacheKey, arr):
        data = encode_array(arr)
        path = self.entry_path(key)
        tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        self._touch(key.keystring(), len(data))

    def get_or_compute(self, key: CacheKey, compute: Callable[[], object]):
        """Return ``(array, hit)``; ``compute`` runs only on a miss."""
        ks = key.keystring()
        with self._mutex:
            fut = self._inflight.get(ks)
            owner = fut is None
            if owner:
                fut = Future()
                self._inflight[ks] = fut
        if not owner:
            return fut.result()[0], True
        try:
            arr = self._load(key)
            if arr is not None:
                self.hits += 1
                result = (arr, True)
            else:
                self.misses += 1
                arr = compute()
                if not isinstance(arr, JaggedArray):
                    arr = as_flat(arr)
                self._store(key, arr)
                result = (arr, False)
            fut.set_result(result)
            return result
        except BaseException as e:
            fut.set_exception(e)
            raise
        finally:
            with self._mutex:
                self._inflight.pop(ks, None)

    def entries(self) -> dict:
        """keystring -> (bytes, last_access) for every entry file on disk."""
        with self._index() as index:
            snapshot = dict(index)
        out = {}
        for p in self.root.glob("*.col"):
            ks = p.name[: -len(".col")]
            meta = snapshot.get(ks)
            if meta is None:
                st = p.stat()
                out[ks] = (st.st_size, st.st_mtime)
            else:
                out[ks] = (int(meta["bytes"]), float(meta["last_access"]))
        return out

    def total_bytes(self) -> int:
        return sum(b for b, _ in self.entries().values())

    def evict_to(self, limit_bytes: int) -> int:
        """Remove least-recently-used entries until the total is at most ``limit_bytes``."""
        entries = self.entries()
        total = sum(b for b, _ in entries.values())
        freed = 0
        victims = []
        for ks, (nbytes, _) in sorted(entries.items(), key=lambda kv: (kv[1][1], kv[0])):
            if total <= limit_bytes:
                break
            victims.append(ks)
            total -= nbytes
            freed += nbytes
        for ks in victims:
            (self.root / f"{ks}.col").unlink(missing_ok=True)
        if victims:
            with self._index() as index:
                for ks in victims:
                    index.pop(ks, None)
        return freed


def cache_get_or_compute(cache: ColumnCache, key: CacheKey, compute):
    return cache.get_or_compute(key, compute)


def cache_evict_to(cache: ColumnCache, limit_bytes: int) -> int:
    return cache.evict_to(limit_bytes)
