"""Lossless float64 <-> 16-hex-digit big-endian bit pattern strings."""
from __future__ import annotations

import re
import struct

import numpy as np

_HEX64 = re.compile(r"[0-9a-f]{16}\Z")


def hex64(x: float) -> str:
    return struct.pack(">d", float(x)).hex()


def unhex64(s: str) -> float:
    if not isinstance(s, str) or not _HEX64.match(s):
        raise ValueError(f"not a hex64 float: {s!r}")
    return struct.unpack(">d", bytes.fromhex(s))[0]


def hex64_array(a) -> list[str]:
    raw = np.ascontiguousarray(a, dtype=">f8").tobytes().hex()
    return [raw[i : i + 16] for i in range(0, len(raw), 16)]


def unhex64_array(items) -> np.ndarray:
    """Decode a list of hex64 strings; raises ValueError naming the first bad index."""
    for i, s in enumerate(items):
        if not isinstance(s, str) or not _HEX64.match(s):
            raise ValueError(f"not a hex64 float at index {i}: {s!r}")
    if not items:
        return np.zeros(0, dtype=np.float64)
    return np.frombuffer(bytes.fromhex("".join(items)), dtype=">f8").astype(np.float64)
