"""Critical exponents of pole weight series and the order of a pole field."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import BadParameter, EmptyRestriction, Inconclusive
from .polefield.tails import Decision, TailModel, combine

DEFAULT_TOL = 1e-3
SEARCH_HI = 4.0
METHODS = ("closed_form", "bisection", "pressure_lower", "cover_upper", "regression")


@dataclass(frozen=True)
class DimensionEstimate:
    lo: float
    hi: float
    method: str
    tolerance: float
    degenerate: bool = False
    confidence: str = "exact_tail"
    notes: Tuple[str, ...] = ()
    meta: dict = dc_field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise BadParameter(f"unknown method {self.method!r}")
        if not self.lo <= self.hi:
            raise BadParameter("estimate needs lo <= hi")

    @property
    def value(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self):
        return self.hi - self.lo

    def contains(self, x, slack=0.0):
        return self.lo - slack <= x <= self.hi + slack

    def to_dict(self):
        d = {"lo": self.lo, "hi": self.hi, "value": self.value, "method": self.method,
             "tolerance": self.tolerance, "degenerate": self.degenerate,
             "confidence": self.confidence, "notes": list(self.notes)}
        if self.meta:
            d["meta"] = self.meta
        return d


@dataclass(frozen=True)
class OrderEstimate:
    rho: float
    method: str
    tolerance: float = 0.0
    confidence: str = "exact_tail"

    @property
    def infinite(self):
        return math.isinf(self.rho)

    def to_dict(self):
        return {"rho": "inf" if self.infinite else self.rho, "method": self.method,
                "tolerance": self.tolerance, "confidence": self.confidence}


@dataclass(frozen=True)
class SeriesProfile:
    """Weights of one series: an explicit head and the tails of its
    infinite parts (each already stated for ``mu``)."""

    weights: np.ndarray
    tails: Tuple[TailModel, ...]
    mu: int = 1
    restriction: Optional[int] = None
    planar: bool = False
    tail_bound: Optional[Callable[[float], float]] = dc_field(default=None, compare=False)
    notes: Tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise BadParameter("weights must be positive and finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "tails", tuple(self.tails))

    @property
    def finite(self):
        return all(t.kind == "none" for t in self.tails)

    def head_sum(self, t):
        if self.weights.size == 0:
            return 0.0
        lw = t * np.log(self.weights)
        top = lw.max()
        return float(math.exp(top) * np.exp(lw - top).sum()) if np.isfinite(top) else 0.0

    def scaled(self, c):
        """The profile of the field with every coefficient multiplied by c."""
        return SeriesProfile(self.weights * c, self.tails, self.mu, self.restriction,
                             self.planar, None, self.notes)


def profile_from_field(f, cap=None):
    """Profile of the pole-weight series sum w_j^t for a pole field.

    With ``cap`` only multiplicities <= cap are kept and mu becomes the
    largest multiplicity left.
    """
    if cap is None:
        mults = set(int(m) for m in f.mults) | set(f.weight_tails)
        mu = f.max_mult
    else:
        cap = int(cap)
        mults = set(int(m) for m in f.mults if m <= cap) | {m for m in f.weight_tails if m <= cap}
        if not mults:
            raise EmptyRestriction(f"no poles of multiplicity <= {cap}")
        mu = max(mults)
    w, _ = f.weights(mu=mu, cap=cap)
    tails = tuple(t.rescaled(mu) for m, t in sorted(f.tail_classes(cap).items()))
    notes = []
    if cap is None and not f.finite and not f.max_mult_attained:
        notes.append("declared max_mult is not attained in the explicit head")
    if not tails:
        tails = (TailModel("none"),)
    far = f.far

    tail_bound = None
    if far is not None and hasattr(far, "weight_tail_log_upper"):
        def tail_bound(t, _far=far, _mu=mu):
            return math.exp(min(_far.weight_tail_log_upper(0.0, t, _mu), 700.0))
    return SeriesProfile(w[w > 0], tails, mu, cap, True, tail_bound, tuple(notes))


def converges(profile: SeriesProfile, t) -> Decision:
    """Convergence of sum w_j^t, decided by the tails alone."""
    return combine(tl.decide(t) for tl in profile.tails)


def _regression(weights):
    w = np.sort(np.asarray(weights, dtype=float))[::-1]
    if w.size < 10:
        raise Inconclusive("too few explicit weights for a regression estimate")
    n = np.arange(1, w.size + 1)
    half = slice(w.size // 2, None)
    x, y = np.log(1.0 / w[half]), np.log(n[half])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    se = math.sqrt(float(resid @ resid) / max(1, x.size - 2) / float(((x - x.mean()) ** 2).sum()))
    return float(slope), float(se)


def critical_exponent(profile: SeriesProfile, tol=DEFAULT_TOL, trace=None, fallback=True):
    """Critical exponent of the profile's series.

    Bisection on :func:`converges` over [0, 4]; the tails' closed form is
    reported instead when every tail has one. ``trace`` is a path or writable
    file receiving ``t,decision,partial_sum_head,tail_bound`` rows.
    """
    if not tol > 0:
        raise BadParameter("tol must be positive")
    if profile.finite:
        return DimensionEstimate(0.0, 0.0, "closed_form", tol, degenerate=True,
                                 notes=profile.notes + ("finitely many poles",))
    rows = []

    def probe(t):
        d = converges(profile, t)
        tb = ""
        if trace is not None and profile.tail_bound is not None and d is Decision.CONVERGES:
            tb = repr(profile.tail_bound(t))
        rows.append((repr(t), d.value, repr(profile.head_sum(t)), tb))
        return d

    lo, hi = 0.0, SEARCH_HI
    inconclusive = False
    if probe(lo) is Decision.CONVERGES:
        hi = lo
    elif (d := probe(hi)) is not Decision.CONVERGES:
        inconclusive = d is Decision.INCONCLUSIVE
        lo = hi
    while hi - lo > tol and not inconclusive:
        mid = 0.5 * (lo + hi)
        d = probe(mid)
        if d is Decision.CONVERGES:
            hi = mid
        elif d is Decision.DIVERGES:
            lo = mid
        else:
            inconclusive = True
    _write_trace(trace, rows)

    if inconclusive:
        if not fallback:
            raise Inconclusive("the tail model cannot decide convergence")
        slope, se = _regression(profile.weights)
        v = max(0.0, slope)
        if profile.planar:
            v = min(v, 2.0)
        return DimensionEstimate(v, v, "regression", max(tol, se), confidence="regression_only",
                                 notes=profile.notes + ("tail model inconclusive",))

    crit = [tl.critical_value() for tl in profile.tails]
    notes = list(profile.notes)
    if lo >= SEARCH_HI:
        notes.append("series diverges on the whole search interval")
    if all(c is not None for c in crit) and all(tl.kind != "custom_hint" for tl in profile.tails):
        v = max(crit)
        if profile.planar:
            v = min(max(v, 0.0), 2.0)
        return DimensionEstimate(max(v, 0.0), max(v, 0.0), "closed_form", tol,
                                 notes=tuple(notes), meta={"bisection": [lo, hi]})
    if profile.planar:
        lo, hi = min(lo, 2.0), min(hi, 2.0)
    return DimensionEstimate(max(lo, 0.0), max(hi, 0.0), "bisection", tol, notes=tuple(notes))


def _write_trace(trace, rows):
    if trace is None:
        return
    header = ("t", "decision", "partial_sum_head", "tail_bound")
    if hasattr(trace, "write"):
        w = csv.writer(trace, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    else:
        with open(trace, "w", newline="") as fh:
            _write_trace(fh, rows)


def field_critical_exponent(f, tol=DEFAULT_TOL, trace=None):
    return critical_exponent(profile_from_field(f), tol, trace)


def restricted_critical_exponent(f, M, tol=DEFAULT_TOL, trace=None):
    """delta_M: the critical exponent over poles of multiplicity <= M."""
    return critical_exponent(profile_from_field(f, cap=M), tol, trace)


def restricted_sequence(f, tol=DEFAULT_TOL):
    """delta_M for M = 1 .. max_mult; the last entry is sup_M delta_M."""
    out = []
    for M in range(1, f.max_mult + 1):
        try:
            out.append((M, restricted_critical_exponent(f, M, tol)))
        except EmptyRestriction:
            continue
    return out


def order_of_function(f, tol=DEFAULT_TOL):
    """Critical exponent rho of sum |a_j|^-t."""
    if f.finite:
        return OrderEstimate(0.0, "closed_form", tol)
    tail = f.order_tail
    c = tail.critical_value()
    if c is not None and tail.kind != "custom_hint":
        return OrderEstimate(float(c), "closed_form", tol)
    a = np.abs(f.locations)
    prof = SeriesProfile(1.0 / a[a > 0], (tail,), 1, None, False)
    est = critical_exponent(prof, tol)
    if est.lo >= SEARCH_HI:
        return OrderEstimate(math.inf, est.method, tol, est.confidence)
    return OrderEstimate(est.value, est.method, tol, est.confidence)


def bk_upper_bound(M, rho):
    """The bound 2 M rho / (2 + M rho); 2 when rho is infinite."""
    if M < 1 or rho < 0:
        raise BadParameter("need M >= 1 and rho >= 0")
    if math.isinf(rho):
        return 2.0
    return 2.0 * M * rho / (2.0 + M * rho)
