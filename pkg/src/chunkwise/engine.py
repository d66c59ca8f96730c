"""Run a processor over planned chunks and reduce the outputs.

Every chunk is read, processed and returned independently. Per-chunk
accumulators are combined by :func:`deterministic_tree_reduce` in
chunk-index order once all chunks are in, so the result is bitwise the same
whichever executor ran the work and whatever order chunks completed in.
"""
from __future__ import annotations

import abc
import logging
import math
import os
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import jagged as jg
from .accumulator import (
    Accumulator,
    IntCounter,
    Namespace,
    SetAcc,
    check_shape,
    identity_of,
    merge_acc,
)
from .cache import CacheKey, ColumnCache
from .dataset import CfpkReader, Manifest, WorkItem, file_digest, plan_chunks, read_schema
from .errors import ProcessorError, ShapeMismatch, UnknownColumn
from .hist import Categorical, Histogram, Regular
from .records import EventTable

log = logging.getLogger(__name__)


class Processor(abc.ABC):
    """User analysis: a pure map from (dataset, chunk of columns) to an accumulator."""

    @abc.abstractmethod
    def columns(self) -> list[str]:
        ...

    @abc.abstractmethod
    def accumulator_shape(self) -> Accumulator:
        ...

    @abc.abstractmethod
    def process(self, dataset: str, events: EventTable) -> Accumulator:
        ...


@dataclass(frozen=True)
class Sequential:
    max_retries: int = 0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class Pooled:
    workers: int = 4
    max_retries: int = 0

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


ExecutorConfig = Union[Sequential, Pooled]


@dataclass
class RunReport:
    events_processed: int = 0
    chunks_processed: int = 0
    bytes_read: int = 0
    wall_seconds: float = 0.0
    retries: int = 0
    cache_hits: int = 0
    cache_misses: int = 0

    @property
    def events_per_second(self) -> float:
        return self.events_processed / self.wall_seconds if self.wall_seconds > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "events_processed": self.events_processed,
            "chunks_processed": self.chunks_processed,
            "bytes_read": self.bytes_read,
            "wall_seconds": self.wall_seconds,
            "events_per_second": self.events_per_second,
            "retries": self.retries,
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
        }


class InjectedFault(RuntimeError):
    """Transient failure injected by a fault plan."""


@dataclass(frozen=True)
class _ChunkResult:
    chunk_index: int
    acc: Accumulator
    n_events: int
    bytes_read: int
    cache_hits: int
    cache_misses: int


def _column_expression(name: str) -> str:
    return f"column:{name}"


def process_chunk(processor: Processor, item: WorkItem, cache: Optional[ColumnCache] = None,
                  fail: bool = False, opener=None) -> _ChunkResult:
    """Read one work item, run the processor on it and check the output shape."""
    reader = CfpkReader(item.file, opener)
    names = list(processor.columns())
    hits = misses = 0
    if cache is None:
        table = reader.read_columns(names, item.entry_start, item.entry_stop)
    else:
        digest = file_digest(reader.info)
        cols = {}
        for name in names:
            key = CacheKey(digest, item.entry_start, item.entry_stop, _column_expression(name))
            arr, hit = cache.get_or_compute(
                key, lambda n=name: reader.read_columns([n], item.entry_start, item.entry_stop)[n]
            )
            hits += hit
            misses += not hit
            cols[name] = arr
        table = EventTable(cols, item.n_events, {
            "file": item.file, "entry_start": item.entry_start, "entry_stop": item.entry_stop,
        })
    acc = processor.process(item.dataset, table)
    check_shape(processor.accumulator_shape(), acc)
    if fail:
        raise InjectedFault(f"injected failure on chunk {item.chunk_index}")
    return _ChunkResult(item.chunk_index, acc, item.n_events, reader.payload_bytes_read, hits, misses)


def _attempt(processor, item, cache, fail, opener):
    # top-level so process pools can pickle it
    return process_chunk(processor, item, cache, fail, opener)


def deterministic_tree_reduce(accs: Sequence[Accumulator], identity: Optional[Accumulator] = None) -> Accumulator:
    """Balanced pairwise reduction: merge 2i with 2i+1 level by level, odd tail carried up."""
    level = list(accs)
    if not level:
        if identity is None:
            raise ShapeMismatch("cannot reduce an empty list without an identity")
        return identity
    while len(level) > 1:
        nxt = [merge_acc(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def preflight(processor: Processor, items: Sequence[WorkItem], manifest: Manifest, opener=None):
    needed = list(processor.columns())
    for files in manifest.datasets.values():
        for path in files:
            have = set(read_schema(path, opener).names())
            missing = [c for c in needed if c not in have]
            if missing:
                raise UnknownColumn(f"{path}: missing columns {missing}")


def run(processor: Processor, manifest: Manifest, target_events_per_chunk: int = 50_000,
        config: Optional[ExecutorConfig] = None, cache: Optional[ColumnCache] = None,
        faults: Optional[Mapping[int, int]] = None, opener=None) -> tuple[Accumulator, RunReport]:
    """Plan, execute and reduce. ``faults`` maps chunk_index -> injected failures."""
    config = config or Sequential()
    faults = dict(faults or {})
    if any(v < 0 for v in faults.values()):
        raise ValueError("fault counts must be >= 0")
    t0 = time.perf_counter()
    items = plan_chunks(manifest, target_events_per_chunk, opener)
    preflight(processor, items, manifest, opener)
    shape = processor.accumulator_shape()

    if isinstance(config, Pooled):
        results, retries = _run_pooled(processor, items, config, cache, faults, opener)
    else:
        results, retries = _run_sequential(processor, items, config, cache, faults, opener)

    ordered = [results[i] for i in range(len(items))]
    out = deterministic_tree_reduce([r.acc for r in ordered], identity_of(shape))
    report = RunReport(
        events_processed=sum(r.n_events for r in ordered),
        chunks_processed=len(ordered),
        bytes_read=sum(r.bytes_read for r in ordered),
        wall_seconds=time.perf_counter() - t0,
        retries=retries,
        cache_hits=sum(r.cache_hits for r in ordered),
        cache_misses=sum(r.cache_misses for r in ordered),
    )
    return out, report


def _give_up(item: WorkItem, exc: BaseException):
    if isinstance(exc, (ShapeMismatch, UnknownColumn)):
        raise exc
    raise ProcessorError(item.chunk_index, f"{type(exc).__name__}: {exc}") from exc


def _run_sequential(processor, items, config, cache, faults, opener):
    results = {}
    retries = 0
    for item in items:
        attempt = 0
        while True:
            try:
                results[item.chunk_index] = process_chunk(
                    processor, item, cache, attempt < faults.get(item.chunk_index, 0), opener
                )
                break
            except (ShapeMismatch, UnknownColumn):
                raise
            except Exception as exc:
                if attempt >= config.max_retries:
                    _give_up(item, exc)
                attempt += 1
                retries += 1
                log.info("retrying chunk %d (attempt %d): %s", item.chunk_index, attempt, exc)
    return results, retries


def _run_pooled(processor, items, config, cache, faults, opener):
    results = {}
    retries = 0
    attempts = {item.chunk_index: 0 for item in items}
    by_index = {item.chunk_index: item for item in items}
    if not items:
        return results, retries
    with ProcessPoolExecutor(max_workers=config.workers) as pool:

        def submit(item):
            fail = attempts[item.chunk_index] < faults.get(item.chunk_index, 0)
            fut = pool.submit(_attempt, processor, item, cache, fail, opener)
            fut.chunk_index = item.chunk_index
            return fut

        pending = {submit(item) for item in items}
        try:
            while pending:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    idx = fut.chunk_index
                    exc = fut.exception()
                    if exc is None:
                        results[idx] = fut.result()
                        continue
                    if isinstance(exc, (ShapeMismatch, UnknownColumn)):
                        raise exc
                    if attempts[idx] >= config.max_retries:
                        _give_up(by_index[idx], exc)
                    attempts[idx] += 1
                    retries += 1
                    log.info("retrying chunk %d (attempt %d): %s", idx, attempts[idx], exc)
                    pending.add(submit(by_index[idx]))
        except BaseException:
            for fut in pending:
                fut.cancel()
            raise
    return results, retries


# reference analysis

TOY_COLUMNS = ["Muon.pt", "Muon.eta", "Muon.phi", "Muon.charge"]
MASS_AXIS = Regular("mass", 60, 0.0, 120.0)


def dimuon_mass(pt1, eta1, phi1, pt2, eta2, phi2):
    """Massless pair mass, sqrt(2 pt1 pt2 (cosh(deta) - cos(dphi)))."""
    return np.sqrt(2.0 * pt1 * pt2 * (np.cosh(eta1 - eta2) - np.cos(phi1 - phi2)))


class DimuonProcessor(Processor):
    """Opposite-sign dimuon mass spectrum with a four-stage cutflow.

    Muons pass pt > 20 and |eta| < 2.4; events need two passing muons; every
    distinct opposite-charge pair of passing muons fills the mass histogram.
    """

    pt_min = 20.0
    eta_max = 2.4

    def columns(self) -> list[str]:
        return list(TOY_COLUMNS)

    def accumulator_shape(self) -> Namespace:
        return Namespace({
            "mass": Histogram([Categorical("dataset"), MASS_AXIS]),
            "cutflow": Namespace({
                "all": IntCounter(0),
                "obj_sel": IntCounter(0),
                "ge2mu": IntCounter(0),
                "os_pairs": IntCounter(0),
            }),
            "files": SetAcc(),
        })

    def process(self, dataset: str, events: EventTable) -> Namespace:
        muons = events.collection("Muon")
        good = (muons.pt > self.pt_min) & (abs(muons.eta) < self.eta_max)
        muons = muons[good]
        n_good = jg.reduce("count", muons.pt)
        ge2 = n_good >= 2
        muons = muons[ge2]

        left, right = jg.distinct_pairs(muons.pt)
        q = jg.gather_inner(muons.charge, left) * jg.gather_inner(muons.charge, right)
        os_mask = q == -1
        left = jg.compress_inner(left, os_mask)
        right = jg.compress_inner(right, os_mask)

        def pick(field, idx):
            return jg.gather_inner(muons[field], idx).content

        mass = dimuon_mass(
            pick("pt", left), pick("eta", left), pick("phi", left),
            pick("pt", right), pick("eta", right), pick("phi", right),
        )
        out = self.accumulator_shape()
        out["mass"].fill(dataset=dataset, mass=mass)
        return Namespace({
            "mass": out["mass"],
            "cutflow": Namespace({
                "all": IntCounter(events.n_events),
                "obj_sel": IntCounter(int(np.count_nonzero(n_good > 0))),
                "ge2mu": IntCounter(int(np.count_nonzero(ge2))),
                "os_pairs": IntCounter(int(mass.shape[0])),
            }),
            "files": SetAcc([os.path.basename(events.metadata["file"])] if "file" in events.metadata else []),
        })


def builtin_dimuon_processor() -> DimuonProcessor:
    return DimuonProcessor()
