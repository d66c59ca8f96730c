"""``chunkwise`` command line: generate, inspect, run, merge, export.

Exit codes: 0 ok, 2 I/O or parse failure, 3 processing or shape failure,
4 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import accumulator as acc_mod
from .cache import ColumnCache
from .dataset import generate_toy, load_manifest, read_schema
from .engine import Pooled, Sequential, builtin_dimuon_processor, deterministic_tree_reduce, run
from .errors import (
    BadMagic,
    MalformedHeader,
    MalformedPayload,
    ProcessorError,
    ShapeMismatch,
    UnknownColumn,
    UnsupportedVersion,
)
from .hist import Categorical, Histogram

EXIT_OK = 0
EXIT_IO = 2
EXIT_PROCESSING = 3
EXIT_USAGE = 4

DEFAULT_CHUNK_SIZE = 50_000

log = logging.getLogger("chunkwise")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"{text} must be >= 0")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"{text} must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chunkwise", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a deterministic toy dimuon file")
    g.add_argument("-o", dest="out", required=True)
    g.add_argument("--seed", type=_u64, required=True)
    g.add_argument("-n", dest="n_events", type=_nonneg, required=True)
    g.add_argument("--row-group-size", type=_positive, default=10_000)

    i = sub.add_parser("inspect", help="print a file's schema and row groups")
    i.add_argument("path")

    r = sub.add_parser("run", help="run the reference dimuon analysis")
    r.add_argument("-m", dest="manifest", required=True)
    r.add_argument("-o", dest="out", required=True)
    r.add_argument("--executor", choices=["sequential", "pooled"], default="sequential")
    r.add_argument("--workers", type=_positive, default=4)
    r.add_argument("--chunk-size", type=_positive, default=DEFAULT_CHUNK_SIZE)
    r.add_argument("--cache-dir")
    r.add_argument("--max-retries", type=_nonneg, default=0)
    r.add_argument("--report-json")

    m = sub.add_parser("merge", help="merge accumulator JSON files")
    m.add_argument("-o", dest="out", required=True)
    m.add_argument("inputs", nargs="+")

    e = sub.add_parser("export", help="export one histogram as CSV or JSON")
    e.add_argument("input")
    e.add_argument("--hist", required=True)
    e.add_argument("--format", choices=["csv", "json"], default="csv")
    e.add_argument("--include-flow", action="store_true")
    e.add_argument("-o", dest="out", help="write here instead of stdout")
    return p


def _err(msg: str):
    print(f"chunkwise: {msg}", file=sys.stderr)


def cmd_generate(args) -> int:
    try:
        generate_toy(args.out, args.seed, args.n_events, args.row_group_size)
        size = os.path.getsize(args.out)
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc}")
        return EXIT_IO
    print(f"wrote {args.out}: n_events={args.n_events} bytes={size}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        info = read_schema(args.path)
    except BadMagic:
        _err(f"{args.path}: bad magic")
        return EXIT_IO
    except (MalformedHeader, UnsupportedVersion) as exc:
        _err(str(exc))
        return EXIT_IO
    except OSError as exc:
        _err(f"cannot read {args.path}: {exc}")
        return EXIT_IO
    print(f"file: {args.path}")
    print(f"columns: {len(info.schema)}")
    for c in info.schema:
        print(f"  {c.name:<24} {c.dtype:<5} {c.layout}")
    print(f"row_groups: {len(info.row_groups)}")
    print(f"total_events: {info.total_events}")
    return EXIT_OK


def _write_bytes(path: str, data: bytes):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def cmd_run(args) -> int:
    if args.executor == "pooled":
        config = Pooled(workers=args.workers, max_retries=args.max_retries)
    else:
        config = Sequential(max_retries=args.max_retries)
    try:
        manifest = load_manifest(args.manifest)
    except (OSError, ValueError) as exc:
        _err(f"bad manifest {args.manifest}: {exc}")
        return EXIT_IO
    try:
        cache = ColumnCache(args.cache_dir) if args.cache_dir else None
        out, report = run(builtin_dimuon_processor(), manifest, args.chunk_size, config, cache)
    except (ProcessorError, ShapeMismatch, UnknownColumn) as exc:
        _err(str(exc))
        return EXIT_PROCESSING
    except (OSError, BadMagic, MalformedHeader, UnsupportedVersion) as exc:
        _err(str(exc))
        return EXIT_IO
    try:
        _write_bytes(args.out, acc_mod.dumps(out))
        if args.report_json:
            with open(args.report_json, "w") as f:
                json.dump(report.to_dict(), f, indent=2)
                f.write("\n")
    except OSError as exc:
        _err(f"cannot write output: {exc}")
        return EXIT_IO
    print(f"events: {report.events_processed}")
    print(f"chunks: {report.chunks_processed}")
    print(f"bytes_read: {report.bytes_read}")
    print(f"wall_seconds: {report.wall_seconds:.3f}")
    print(f"events_per_second: {report.events_per_second:.1f}")
    print(f"retries: {report.retries}")
    if cache is not None:
        print(f"cache: hits={report.cache_hits} misses={report.cache_misses}")
    return EXIT_OK


def _load_acc(path: str):
    with open(path, "rb") as f:
        return acc_mod.loads(f.read())


def cmd_merge(args) -> int:
    try:
        accs = [_load_acc(p) for p in args.inputs]
    except (OSError, MalformedPayload) as exc:
        _err(str(exc))
        return EXIT_IO
    try:
        merged = deterministic_tree_reduce(accs)
    except ShapeMismatch as exc:
        _err(str(exc))
        return EXIT_PROCESSING
    try:
        _write_bytes(args.out, acc_mod.dumps(merged))
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc}")
        return EXIT_IO
    print(f"merged {len(accs)} inputs into {args.out}")
    return EXIT_OK


def _find_hist(acc, name: str) -> Optional[Histogram]:
    node = acc
    for part in name.split("."):
        if not isinstance(node, acc_mod.Namespace) or part not in node:
            return None
        node = node[part]
    return node if isinstance(node, Histogram) else None


def hist_rows(h: Histogram, include_flow: bool) -> tuple[list[str], list[list]]:
    """Header and rows (axis coordinates then sumw, sumw2) in row-major order."""
    coords = []
    for a in h.axes:
        if isinstance(a, Categorical):
            coords.append(list(a.labels))
            continue
        edges = [float(x) for x in a.edges]
        centers = [(edges[i] + edges[i + 1]) / 2 for i in range(len(edges) - 1)]
        coords.append([float("-inf")] + centers + [float("inf")] if include_flow else centers)
    sumw = h.values(include_flow)
    sumw2 = h.variances(include_flow)
    header = [a.name for a in h.axes] + ["sumw", "sumw2"]
    rows = []
    for idx in np.ndindex(*sumw.shape):
        rows.append([coords[d][i] for d, i in enumerate(idx)] + [float(sumw[idx]), float(sumw2[idx])])
    return header, rows


def _fmt(v) -> str:
    return v if isinstance(v, str) else format(v, ".17g")


def cmd_export(args) -> int:
    try:
        acc = _load_acc(args.input)
    except (OSError, MalformedPayload) as exc:
        _err(str(exc))
        return EXIT_IO
    h = _find_hist(acc, args.hist)
    if h is None:
        _err(f"no histogram named {args.hist!r} in {args.input}")
        return EXIT_USAGE
    header, rows = hist_rows(h, args.include_flow)
    buf = io.StringIO()
    if args.format == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    else:
        json.dump({"hist": args.hist, "columns": header,
                   "rows": [[_fmt(v) if isinstance(v, float) and not math.isfinite(v) else v for v in row]
                            for row in rows]}, buf)
        buf.write("\n")
    text = buf.getvalue()
    if args.out:
        try:
            with open(args.out, "w") as f:
                f.write(text)
        except OSError as exc:
            _err(str(exc))
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "inspect": cmd_inspect,
    "run": cmd_run,
    "merge": cmd_merge,
    "export": cmd_export,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
