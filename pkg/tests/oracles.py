"""Scalar reference implementations used to check the vectorized code.

Everything here works on plain Python lists, one element at a time, and
shares no code with the package beyond reading its inputs.
"""
import math
import struct

import numpy as np


def to_lists(j):
    """JaggedArray -> list of Python lists, read via offsets/content directly."""
    offs = [int(x) for x in j.offsets]
    content = j.content.tolist()
    return [content[offs[i]:offs[i + 1]] for i in range(len(offs) - 1)]


def scalar_op(op, a, b):
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if isinstance(a, int) and isinstance(b, int):
            if b == 0:
                raise ZeroDivisionError
            return a // b
        a, b = float(a), float(b)
        if b == 0.0:
            if a == 0.0 or math.isnan(a):
                return math.nan
            return math.copysign(math.inf, a) * math.copysign(1.0, b)
        return a / b
    if op == "lt":
        return a < b
    if op == "le":
        return a <= b
    if op == "gt":
        return a > b
    if op == "ge":
        return a >= b
    if op == "eq":
        return a == b
    if op == "and":
        return a and b
    if op == "or":
        return a or b
    raise ValueError(op)


def elementwise_jagged_flat(op, jl, flat, jagged_on_left=True):
    """Per-sublist loop: flat value i paired with every element of sublist i."""
    out = []
    for sub, v in zip(jl, flat):
        out.append([scalar_op(op, x, v) if jagged_on_left else scalar_op(op, v, x) for x in sub])
    return out


def elementwise_jagged_jagged(op, a, b):
    return [[scalar_op(op, x, y) for x, y in zip(sa, sb)] for sa, sb in zip(a, b)]


def elementwise_jagged_scalar(op, a, s, jagged_on_left=True):
    return [[scalar_op(op, x, s) if jagged_on_left else scalar_op(op, s, x) for x in sub] for sub in a]


def reduce_loop(kind, lists, default=None):
    out = []
    for sub in lists:
        if kind == "count":
            out.append(len(sub))
        elif kind == "sum":
            acc = 0.0 if any(isinstance(x, float) for x in sub) else 0
            for x in sub:
                acc = acc + x
            out.append(acc)
        elif kind == "any":
            acc = False
            for x in sub:
                acc = acc or x
            out.append(acc)
        elif kind == "all":
            acc = True
            for x in sub:
                acc = acc and x
            out.append(acc)
        else:
            if not sub:
                out.append(default)
                continue
            acc = sub[0]
            for x in sub[1:]:
                if kind == "max":
                    acc = x if x > acc else acc
                else:
                    acc = x if x < acc else acc
            out.append(acc)
    return out


def compress_loop(lists, masks):
    return [[x for x, m in zip(sub, msub) if m] for sub, msub in zip(lists, masks)]


def select_loop(rows, mask):
    return [r for r, m in zip(rows, mask) if m]


def pairs_enum(k):
    return [(i, j) for i in range(k) for j in range(k) if i < j]


def gather_loop(lists, idx):
    return [[sub[i] for i in isub] for sub, isub in zip(lists, idx)]


# histograms


def regular_slot(x, n, lo, hi):
    if x != x:
        return n + 1
    if x < lo:
        return 0
    if x >= hi:
        return n + 1
    b = math.floor((x - lo) * float(n) / (hi - lo))
    return min(max(b, 0), n - 1) + 1


def variable_slot(x, edges):
    if x != x or x >= edges[-1]:
        return len(edges)
    if x < edges[0]:
        return 0
    for i in range(len(edges) - 1):
        if edges[i] <= x < edges[i + 1]:
            return i + 1
    raise AssertionError("unreachable")


class LoopHist:
    """Dict-backed histogram filled one entry at a time.

    ``axes`` items: ("regular", n, lo, hi) | ("variable", edges) | ("categorical",).
    Keys: tuples of numeric slot index or label.
    """

    def __init__(self, axes):
        self.axes = axes
        self.sumw = {}
        self.sumw2 = {}

    def fill_one(self, coords, w=1.0):
        key = []
        for ax, c in zip(self.axes, coords):
            if ax[0] == "regular":
                key.append(regular_slot(c, ax[1], ax[2], ax[3]))
            elif ax[0] == "variable":
                key.append(variable_slot(c, ax[1]))
            else:
                key.append(c)
        key = tuple(key)
        self.sumw[key] = self.sumw.get(key, 0.0) + w
        self.sumw2[key] = self.sumw2.get(key, 0.0) + w * w


# reference analysis


def dimuon_event_loop(pt, eta, phi, charge):
    """Per-event, per-pair scalar interpreter of the dimuon selection.

    Inputs are lists of per-event lists. Returns (mass bin counts keyed by
    Regular(60, 0, 120) slot, cutflow dict).
    """
    counts = {}
    cut = {"all": 0, "obj_sel": 0, "ge2mu": 0, "os_pairs": 0}
    for ev_pt, ev_eta, ev_phi, ev_q in zip(pt, eta, phi, charge):
        cut["all"] += 1
        good = [i for i in range(len(ev_pt)) if ev_pt[i] > 20.0 and abs(ev_eta[i]) < 2.4]
        if len(good) >= 1:
            cut["obj_sel"] += 1
        if len(good) < 2:
            continue
        cut["ge2mu"] += 1
        for a in range(len(good)):
            for b in range(a + 1, len(good)):
                i, j = good[a], good[b]
                if ev_q[i] * ev_q[j] != -1:
                    continue
                m = math.sqrt(2.0 * ev_pt[i] * ev_pt[j]
                              * (math.cosh(ev_eta[i] - ev_eta[j]) - math.cos(ev_phi[i] - ev_phi[j])))
                slot = regular_slot(m, 60, 0.0, 120.0)
                counts[slot] = counts.get(slot, 0) + 1
                cut["os_pairs"] += 1
    return counts, cut


def random_jagged_lists(rng, n_events, max_count, kind):
    out = []
    for _ in range(n_events):
        k = int(rng.integers(0, max_count + 1))
        out.append(random_values(rng, k, kind))
    return out


def random_values(rng, k, kind):
    if kind == "f64":
        # mix of magnitudes with repeats so comparisons hit equality
        vals = rng.normal(0, 100, size=k)
        vals = np.where(rng.random(k) < 0.2, np.round(vals), vals)
        special = rng.random(k)
        vals = np.where(special < 0.03, 0.0, vals)
        vals = np.where((special >= 0.03) & (special < 0.06), -0.0, vals)
        vals = np.where((special >= 0.06) & (special < 0.07), np.inf, vals)
        vals = np.where((special >= 0.07) & (special < 0.08), np.nan, vals)
        return [float(v) for v in vals]
    if kind == "i64":
        return [int(v) for v in rng.integers(-1000, 1000, size=k)]
    return [bool(v) for v in rng.random(k) < 0.5]


def same_value(a, b):
    """Bitwise float equality, treating any two NaNs as equal; exact otherwise."""
    if isinstance(a, float) or isinstance(b, float):
        a, b = float(a), float(b)
        if a != a and b != b:
            return True
        return struct.pack("<d", a) == struct.pack("<d", b)
    return a == b and type(a) is type(b)


def same_lists(actual, expected):
    if len(actual) != len(expected):
        return False
    for sa, se in zip(actual, expected):
        if isinstance(se, list):
            if len(sa) != len(se) or not all(same_value(x, y) for x, y in zip(sa, se)):
                return False
        elif not same_value(sa, se):
            return False
    return True


# toy generator, one draw at a time

M64 = (1 << 64) - 1


def splitmix64_stream(seed):
    s = seed & M64
    while True:
        s = (s + 0x9E3779B97F4A7C15) & M64
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        yield z ^ (z >> 31)


def toy_event_lists(seed, n_events):
    """Per-event lists pt, eta, phi, charge and a MET list, drawn in stream order."""
    draw = splitmix64_stream(seed)
    pt, eta, phi, q, met = [], [], [], [], []
    for _ in range(n_events):
        k = next(draw) % 5
        ev = ([], [], [], [])
        for _ in range(k):
            ev[0].append(15.0 + (next(draw) % 8000) / 100.0)
            ev[1].append(-2.4 + 4.8 * (next(draw) % 10000) / 10000.0)
            ev[2].append(-math.pi + 2.0 * math.pi * (next(draw) % 10000) / 10000.0)
            ev[3].append(1 if next(draw) % 2 == 0 else -1)
        for dst, src in zip((pt, eta, phi, q), ev):
            dst.append(src)
        met.append((next(draw) % 20000) / 100.0)
    return pt, eta, phi, q, met
