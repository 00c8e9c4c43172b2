"""Non-autonomous conformal IFS: index schedules, growth, pressure, Bowen.

Maps are addressed as (label, index): level n of a schedule is a label l
together with a half-open range [start, stop) of indices. Weights (lower and
upper bounds on sup-norms of the map derivatives) come from a *pool*, an
object with

``first_index(label)``
    where the block of that label starts;
``log_mass(label, start, stop, t, side)``
    log of sum_{i in [start, stop)} weight_i^t with ``side`` "lo" or "hi";
``find_stop(label, start, t, log_target)``
    the least stop with lo-mass >= exp(log_target), raising PoolExhausted
    when the pool cannot supply it;
``log_sup()``
    log of the largest upper weight.

Indices are Python ints throughout, since realistic pools put block ends far
beyond 2**63.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import random
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Tuple

import numpy as np

from .critexp import DimensionEstimate
from .errors import BadParameter, PoolExhausted

LOG2 = math.log(2.0)
GROWTH_EPSILON = 0.1
DEFAULT_DEPTH = 64


def _logsumexp(x):
    if x.size == 0:
        return -math.inf
    top = float(np.max(x))
    if not np.isfinite(top):
        return top
    return top + math.log(float(np.sum(np.exp(x - top))))


class ArrayPool:
    """Finite pool of explicit weights, optionally rescaled per label.

    ``log_scale(label)`` returns a pair of log factors (lo, hi) applied to the
    weights of that label before raising to t. ``shifted`` blocks start at
    label - 1; otherwise every block starts at 0.
    """

    def __init__(self, lo, hi=None, log_scale=None, shifted=True):
        lo = np.asarray(lo, dtype=float)
        hi = lo if hi is None else np.asarray(hi, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise BadParameter("weights must be a non-empty 1-d array")
        if np.any(lo <= 0) or np.any(hi < lo):
            raise BadParameter("need 0 < lo <= hi")
        self.log_lo = np.log(lo)
        self.log_hi = np.log(hi)
        self.log_scale = log_scale or (lambda label: (0.0, 0.0))
        self.shifted = shifted

    def __len__(self):
        return self.log_lo.size

    def first_index(self, label):
        return label - 1 if self.shifted else 0

    def _terms(self, label, start, stop, t, side):
        if not 0 <= start <= stop:
            raise BadParameter("bad index range")
        if stop > len(self):
            raise PoolExhausted(f"range end {stop} beyond the {len(self)} weights")
        k = 0 if side == "lo" else 1
        base = self.log_lo if side == "lo" else self.log_hi
        return t * (base[start:stop] + self.log_scale(label)[k])

    def log_mass(self, label, start, stop, t, side="lo"):
        return _logsumexp(self._terms(label, start, stop, t, side))

    def find_stop(self, label, start, t, log_target):
        if start >= len(self):
            raise PoolExhausted(f"block {label} starts beyond the pool")
        acc = np.logaddexp.accumulate(self._terms(label, start, len(self), t, "lo"))
        hit = np.flatnonzero(acc >= log_target - 1e-12)
        if hit.size == 0:
            raise PoolExhausted(f"weights run out while building block {label}")
        return start + int(hit[0]) + 1

    def log_sup(self):
        return float(self.log_hi.max())


@dataclass
class ContractionFamily:
    """Weights plus (optionally) the maps themselves.

    ``apply(label, indices, state)`` applies the maps to a batch of points in
    whatever representation the family uses; ``to_points`` turns that into
    complex numbers and ``center`` builds ``n`` copies of the domain centre.
    """

    pool: object
    distortion: float = 1.0
    apply: Optional[Callable] = None
    center: Optional[Callable] = None
    to_points: Optional[Callable] = None
    diameter: float = 1.0
    name: str = "family"
    contraction: float = dc_field(init=False)

    def __post_init__(self):
        s = math.exp(self.pool.log_sup())
        if not s < 1:
            raise BadParameter(f"maps are not uniform contractions (sup weight {s:.6g})")
        self.contraction = s

    @classmethod
    def autonomous(cls, n, c, maps=True):
        """n similarities of ratio c with fixed points on the unit circle."""
        if n < 1 or not 0 < c < 1:
            raise BadParameter("need n >= 1 and 0 < c < 1")
        pool = ArrayPool(np.full(n, float(c)), shifted=False)
        if not maps:
            return cls(pool, name=f"moran({n},{c})")
        fixed = np.exp(2j * np.pi * np.arange(n) / n) if n > 1 else np.zeros(1, complex)

        def apply(label, idx, pts):
            return c * pts + (1 - c) * fixed[np.asarray(idx, dtype=np.int64)]

        return cls(pool, 1.0, apply, lambda k: np.zeros(k, complex), lambda p: p, 2.0,
                   f"moran({n},{c})")


@dataclass(frozen=True)
class Level:
    label: int
    start: int
    stop: int
    block: bool = True

    @property
    def size(self):
        return self.stop - self.start


@dataclass
class IndexSchedule:
    levels: Tuple[Level, ...]
    t: Optional[float] = None

    def __post_init__(self):
        self.levels = tuple(self.levels)
        if not self.levels:
            raise BadParameter("empty schedule")

    def __len__(self):
        return len(self.levels)

    @property
    def sizes(self):
        return [lv.size for lv in self.levels]

    @property
    def growth_log(self):
        return [math.log(s) / n for n, s in enumerate(self.sizes, start=1)]

    @classmethod
    def constant(cls, n_maps, n_levels, label=1):
        return cls(tuple(Level(label, 0, n_maps) for _ in range(n_levels)))

    def to_json(self):
        rows = [[lv.label, str(lv.start), str(lv.stop), lv.block] for lv in self.levels]
        return json.dumps({"t": self.t, "levels": rows})


def build_schedule(pool, t, n_levels=DEFAULT_DEPTH):
    """Blocks with lo-mass >= 2, joined by levels that add one index each.

    Block l spans [first_index(l), stop_l) with the least such stop. Between
    blocks of sizes s < s' the levels of sizes s+1, ..., s'-1 reuse block l's
    label and start, so every level carries at least block l's mass and sizes
    never grow by more than one. ``pool`` may also be a plain weight array.
    """
    if not isinstance(n_levels, int) or n_levels < 1:
        raise BadParameter("n_levels must be a positive integer")
    if not t >= 0:
        raise BadParameter("t must be non-negative")
    if not hasattr(pool, "find_stop"):
        pool = ArrayPool(pool)
    levels = []
    prev = None
    label = 1
    while len(levels) < n_levels:
        start = pool.first_index(label)
        stop = pool.find_stop(label, start, t, LOG2)
        size = stop - start
        if prev is not None:
            for extra in range(1, size - prev.size):
                if len(levels) >= n_levels:
                    break
                levels.append(Level(prev.label, prev.start, prev.stop + extra, False))
            if len(levels) >= n_levels:
                break
        prev = Level(label, start, stop, True)
        levels.append(prev)
        label += 1
    return IndexSchedule(tuple(levels), t)


@dataclass(frozen=True)
class GrowthReport:
    passed: bool
    statistic: float
    epsilon: float
    curve: Tuple[float, ...]


def growth_check(schedule, epsilon=GROWTH_EPSILON):
    """Pass iff the mean of (1/n) log #I^(n) over the last quarter < epsilon.

    Growth is an asymptotic property: a schedule whose first block holds s
    indices can only pass at depths well beyond log(s) / epsilon.
    """
    g = schedule.growth_log
    if len(g) < 10:
        raise BadParameter("growth check needs at least 10 levels")
    tail = g[-max(1, len(g) // 4):]
    stat = float(np.mean(tail))
    return GrowthReport(stat < epsilon, stat, float(epsilon), tuple(g))


@dataclass
class PressureCurve:
    t: float
    level_log_lo: Tuple[float, ...]
    level_log_hi: Tuple[float, ...]
    running_lo: Tuple[float, ...]
    running_hi: Tuple[float, ...]
    pressure_bracket: Tuple[float, float]
    liminf: Tuple[float, float]
    monotone_tail: bool

    @property
    def depth(self):
        return len(self.running_lo)

    def rows(self):
        return [(self.t, n, lo, hi) for n, (lo, hi) in
                enumerate(zip(self.running_lo, self.running_hi), start=1)]


def lower_pressure(family, schedule, t, n_max=DEFAULT_DEPTH):
    """Running averages (1/n) sum_k log sum_{I^(k)} w^t of both weight bounds.

    The liminf estimate is the minimum of the running averages over depths
    in [n_max/2, n_max].
    """
    if not t >= 0:
        raise BadParameter("t must be non-negative")
    pool = family.pool if hasattr(family, "pool") else family
    n = min(int(n_max), len(schedule))
    if n < 1:
        raise BadParameter("n_max must be at least 1")
    lo, hi = [], []
    for lv in schedule.levels[:n]:
        lo.append(pool.log_mass(lv.label, lv.start, lv.stop, t, "lo"))
        hi.append(pool.log_mass(lv.label, lv.start, lv.stop, t, "hi"))
    k = np.arange(1, n + 1)
    run_lo = np.cumsum(lo) / k
    run_hi = np.cumsum(hi) / k
    w = slice((n - 1) // 2, n)
    d = np.diff(run_lo[w])
    monotone = bool(np.all(d >= -1e-12) or np.all(d <= 1e-12))
    return PressureCurve(float(t), tuple(lo), tuple(hi), tuple(run_lo.tolist()),
                         tuple(run_hi.tolist()), (float(run_lo[-1]), float(run_hi[-1])),
                         (float(run_lo[w].min()), float(run_hi[w].min())), monotone)


def write_pressure_csv(path_or_file, curves):
    header = ("t", "depth", "lo", "hi")
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        for c in curves:
            w.writerows((repr(a), n, repr(b), repr(d)) for a, n, b, d in c.rows())
    else:
        with open(path_or_file, "w", newline="") as fh:
            write_pressure_csv(fh, curves)


def bowen_dimension(family, schedule_builder, tol=1e-3, n_max=DEFAULT_DEPTH, t_max=4.0):
    """Zero of the lower pressure by bisection on both bracket ends.

    ``lo`` is the largest t found with pressure-lo > 0; ``hi`` the smallest
    with pressure-hi < 0 or with no schedule available (PoolExhausted).
    """
    if not tol > 0:
        raise BadParameter("tol must be positive")
    cache = {}

    def probe(t):
        if t not in cache:
            try:
                pc = lower_pressure(family, schedule_builder(t), t, n_max)
                cache[t] = pc.liminf
            except PoolExhausted:
                cache[t] = None
        return cache[t]

    def positive(t):
        p = probe(t)
        return p is not None and p[0] > 0

    def negative(t):
        p = probe(t)
        return p is None or p[1] < 0

    def search(pred_true_at_hi):
        a, b = 0.0, t_max
        if pred_true_at_hi(a):
            return a, a
        if not pred_true_at_hi(b):
            return b, b
        while b - a > tol:
            mid = 0.5 * (a + b)
            if pred_true_at_hi(mid):
                b = mid
            else:
                a = mid
        return a, b

    lo_a, lo_b = search(lambda t: not positive(t))
    hi_a, hi_b = search(negative)
    lo, hi = lo_a, max(hi_b, lo_a)
    notes = []
    if hi_a - lo_b > tol:
        notes.append(f"pressure bracket straddles 0 on [{lo_b:.6g}, {hi_a:.6g}]")
    if lo >= 2.0 - tol:
        notes.append("zero of the pressure at or beyond 2; planar limit sets have dimension <= 2")
        lo, hi = min(lo, 2.0), min(hi, 2.0)
    meta = {"probes": {repr(k): (None if v is None else list(v)) for k, v in sorted(cache.items())}}
    return DimensionEstimate(lo, max(lo, hi), "pressure_lower", tol, notes=tuple(notes), meta=meta)


@dataclass
class LimitSetSample:
    points: np.ndarray
    depth: int
    words: Tuple[Tuple[int, ...], ...]
    state: object = None


def _word_choices(schedule, depth, breadth):
    out = []
    for lv in schedule.levels[:depth]:
        out.append(range(lv.start, min(lv.stop, lv.start + breadth)))
    return out


def sample_limit_set(family, schedule, depth, max_points=1000, breadth=4, seed=0):
    """Images of the domain centre under depth-long compositions.

    At most ``breadth`` indices are taken from the start of each level's
    range; if the resulting words exceed ``max_points`` a seeded subsample is
    used. Index i_1 is applied last.
    """
    if depth < 1:
        raise BadParameter("depth must be at least 1")
    if depth > len(schedule):
        raise BadParameter("schedule is shorter than the requested depth")
    if family.apply is None:
        raise BadParameter("family has no maps to apply")
    choices = _word_choices(schedule, depth, max(1, int(breadth)))
    total = math.prod(len(c) for c in choices)
    if total <= max_points:
        words = list(itertools.product(*choices))
    else:
        rng = random.Random(seed)
        seen = set()
        while len(seen) < max_points:
            seen.add(tuple(c[rng.randrange(len(c))] for c in choices))
        words = sorted(seen)
    idx = np.array(words, dtype=object)
    state = family.center(len(words))
    for k in range(depth - 1, -1, -1):
        lv = schedule.levels[k]
        state = family.apply(lv.label, [int(x) for x in idx[:, k]], state)
    return LimitSetSample(np.asarray(family.to_points(state)), depth,
                          tuple(tuple(int(x) for x in w) for w in words), state)
