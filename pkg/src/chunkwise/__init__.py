"""Columnar event analysis: jagged arrays, mergeable histograms and a chunked map-reduce engine."""

from .accumulator import Counter, IntCounter, Namespace, SetAcc, identity_of, merge_acc
from .cache import CacheKey, ColumnCache
from .dataset import (
    ColumnSchema,
    Manifest,
    WorkItem,
    generate_toy,
    load_manifest,
    plan_chunks,
    read_columns,
    read_schema,
    write_file,
)
from .engine import (
    DimuonProcessor,
    Pooled,
    Processor,
    RunReport,
    Sequential,
    builtin_dimuon_processor,
    deterministic_tree_reduce,
    run,
)
from .hist import Categorical, Histogram, Regular, Variable, hist_deserialize, hist_serialize
from .jagged import JaggedArray, as_flat, from_counts, from_lists
from .lookup import BinnedLookup, lookup_build, lookup_eval
from .records import Collection, EventTable, table_from_columns, zip_collection

__version__ = "0.1.0"
