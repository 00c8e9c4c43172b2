"""Tail models for the non-explicit part of a pole field.

A :class:`TailModel` is the qualitative description used to decide
convergence of weight series. The ``*Tail`` classes below are the
quantitative side: rigorous upper (and, for lattices, lower) bounds for sums
over poles that are not stored explicitly, obtained by comparing lattice sums
with radial integrals (every unit cell of a lattice point lies within
``sqrt(2)/2`` of it).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import mpmath as mp
import numpy as np

from ..errors import BadParameter, TailUnbounded

CELL = math.sqrt(2.0) / 2.0

TAIL_KINDS = (
    "power_law",        # planar pole density, weights ~ |a|^-exponent
    "power_law_line",   # poles along a line, weights ~ j^-exponent
    "exponential",
    "factorial",
    "divergent",        # series diverges for every t
    "custom_hint",
    "none",             # finitely many poles
)


class Decision(str, enum.Enum):
    CONVERGES = "converges"
    DIVERGES = "diverges"
    INCONCLUSIVE = "inconclusive"


Directions = Union[str, Tuple[float, ...], None]


@dataclass(frozen=True)
class TailModel:
    """Asymptotic shape of a weight series beyond its explicit head.

    ``exponent`` of the power-law kinds is stated for weights computed with
    ``base_mu``; :meth:`rescaled` moves it to another mu. ``directions`` is
    ``"isotropic"``, a tuple of ray angles carrying the tail, or ``None``
    when unknown.
    """

    kind: str
    exponent: Optional[float] = None
    rate: Optional[float] = None
    critical_t: Optional[float] = None
    base_mu: int = 1
    directions: Directions = None

    def __post_init__(self):
        if self.kind not in TAIL_KINDS:
            raise BadParameter(f"unknown tail kind {self.kind!r}")
        if self.kind in ("power_law", "power_law_line"):
            if self.exponent is None or not self.exponent > 0:
                raise BadParameter(f"{self.kind} tail needs a positive exponent")

    @property
    def dimension(self):
        return 2.0 if self.kind == "power_law" else 1.0

    def critical_value(self):
        """Closed-form critical exponent, or None if the tail cannot tell."""
        if self.kind in ("power_law", "power_law_line"):
            return self.dimension / self.exponent
        if self.kind in ("exponential", "factorial", "none"):
            return 0.0
        if self.kind == "divergent":
            return math.inf
        return self.critical_t

    def decide(self, t):
        if self.kind == "none":
            return Decision.CONVERGES
        if self.kind == "divergent":
            return Decision.DIVERGES
        if self.kind in ("exponential", "factorial"):
            return Decision.CONVERGES if t > 0 else Decision.DIVERGES
        if self.kind in ("power_law", "power_law_line"):
            s = t * self.exponent
            if math.isclose(s, self.dimension, rel_tol=1e-12, abs_tol=1e-15):
                return Decision.DIVERGES  # divergent at the critical point
            return Decision.CONVERGES if s > self.dimension else Decision.DIVERGES
        if self.critical_t is None:
            return Decision.INCONCLUSIVE
        if math.isclose(t, self.critical_t, rel_tol=1e-12, abs_tol=1e-15):
            return Decision.INCONCLUSIVE
        return Decision.CONVERGES if t > self.critical_t else Decision.DIVERGES

    def rescaled(self, mu):
        if mu == self.base_mu or self.kind not in ("power_law", "power_law_line"):
            return self
        shift = 1.0 / mu - 1.0 / self.base_mu
        return TailModel(self.kind, self.exponent + shift, self.rate, self.critical_t,
                         mu, self.directions)

    def to_dict(self):
        d = {"kind": self.kind, "base_mu": self.base_mu}
        for key in ("exponent", "rate", "critical_t"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.directions is not None:
            d["directions"] = (self.directions if isinstance(self.directions, str)
                               else list(self.directions))
        return d

    @classmethod
    def from_dict(cls, d):
        dirs = d.get("directions")
        if isinstance(dirs, list):
            dirs = tuple(float(x) for x in dirs)
        return cls(d["kind"], d.get("exponent"), d.get("rate"), d.get("critical_t"),
                   int(d.get("base_mu", 1)), dirs)


def combine(decisions):
    """Convergence of a sum of series from the decisions of its parts."""
    decisions = list(decisions)
    if any(d is Decision.DIVERGES for d in decisions):
        return Decision.DIVERGES
    if all(d is Decision.CONVERGES for d in decisions):
        return Decision.CONVERGES
    return Decision.INCONCLUSIVE


# ---------------------------------------------------------------------------
# radial integral comparison
# ---------------------------------------------------------------------------

def log_radial_integral(log_integrand, r1, r2):
    """log of int_{r1}^{r2} exp(log_integrand(r)) dr, computed with mpmath.

    Wide ranges are integrated in the variable u = log r, split at every
    factor of e^8 so the quadrature sees smooth pieces.
    """
    r1 = mp.mpf(r1)
    r2 = mp.inf if r2 == math.inf or r2 == mp.inf else mp.mpf(r2)
    if r1 <= 0:
        raise BadParameter("radial integral needs r1 > 0")
    if r2 <= r1:
        return -mp.inf
    u1 = mp.log(r1)
    if r2 == mp.inf:
        nodes = [u1 + 8 * k for k in range(4)] + [mp.inf]
    else:
        u2 = mp.log(r2)
        n = max(1, int(mp.ceil((u2 - u1) / 8)))
        nodes = [u1 + (u2 - u1) * k / n for k in range(n + 1)]
    # scale by the integrand at the lower end to stay in range
    ref = log_integrand(r1) + u1

    def g(u):
        return mp.exp(log_integrand(mp.exp(u)) + u - ref)

    val = mp.quad(g, nodes)
    if val <= 0:
        return -mp.inf
    return mp.log(val) + ref


def lattice_sum_upper(log_g, r1, r2=math.inf, density=2 * math.pi, extra=0.0):
    """log upper bound of sum over lattice points r1 < |a| <= r2 of g(|a|).

    g must be non-increasing. ``density * r + extra`` bounds the arc length
    of the region at radius r (2*pi*r for the full plane).
    """
    lo = max(r1 - CELL, 1e-300)
    hi = r2 + CELL if r2 != math.inf else math.inf

    def integrand(r):
        return log_g(max(r - CELL, r1)) + mp.log(density * r + extra)

    return log_radial_integral(integrand, lo, hi)


def lattice_cone_sum_lower(log_g, r1, r2, aperture, strip):
    """log lower bound of the lattice sum of g(|a|) over r1 < |a| <= r2 in a
    cone of the given aperture, with the points |Re a| < strip or
    |Im a| < strip removed.
    """
    lo, hi = r1 + CELL, r2 - CELL
    if hi <= lo:
        return -mp.inf
    loss = math.pi * CELL + 4 * math.pi * (strip + 0.5)
    start = max(lo, 2.0 * loss / aperture)
    if hi <= start:
        return -mp.inf

    def integrand(r):
        return log_g(r + CELL) + mp.log(aperture * r - loss)

    return log_radial_integral(integrand, start, hi)


# ---------------------------------------------------------------------------
# quantitative tails of the built-in families
# ---------------------------------------------------------------------------

def lattice_index(p, q):
    """Bijection Z^2 -> N (zigzag + Szudzik pairing)."""
    x = 2 * p if p >= 0 else -2 * p - 1
    y = 2 * q if q >= 0 else -2 * q - 1
    return x * x + x + y if x >= y else y * y + x


def lattice_coords(index):
    s = math.isqrt(index)
    r = index - s * s
    if r < s:
        x, y = r, s
    else:
        x, y = s, r - s

    def unzig(v):
        return v // 2 if v % 2 == 0 else -(v + 1) // 2

    return unzig(x), unzig(y)


class LatticeTail:
    """Poles a = p + iq, |p|, |q| >= start, of multiplicity ``mult`` with
    coefficients b = coeff(|a|); explicit up to ``radius``.
    """

    def __init__(self, start, mult, kind, alpha, radius):
        self.start = int(start)
        self.mult = int(mult)
        self.kind = kind          # "power" or "exp"
        self.alpha = float(alpha)
        self.radius = float(radius)

    # coefficient helpers --------------------------------------------------
    def coeff(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            return r ** (-self.alpha)
        return np.exp(-r)

    def log_coeff(self, r):
        if self.kind == "power":
            return -self.alpha * mp.log(r)
        return -mp.mpf(r)

    def log_weight(self, r, mu):
        """log of |b|/|a|^(1+1/mu) at modulus r (mpmath)."""
        return self.log_coeff(r) - (1 + mp.mpf(1) / mu) * mp.log(r)

    def pole_index(self, p, q):
        return lattice_index(p, q)

    def is_pole(self, p, q):
        return abs(p) >= self.start and abs(q) >= self.start

    def datum(self, index):
        """(location, coeff, mult) of a non-explicit pole, or None."""
        p, q = lattice_coords(index)
        a = complex(p, q)
        if not self.is_pole(p, q) or abs(a) <= self.radius:
            return None
        return a, complex(float(self.coeff(abs(a)))), self.mult

    # evaluation support ---------------------------------------------------
    def local_poles(self, z, window):
        """Non-explicit poles within ``window`` of z, as (a, b) arrays."""
        x0, y0 = z.real, z.imag
        ps = np.arange(math.floor(x0 - window), math.ceil(x0 + window) + 1)
        qs = np.arange(math.floor(y0 - window), math.ceil(y0 + window) + 1)
        P, Q = np.meshgrid(ps, qs, indexing="ij")
        a = (P + 1j * Q).ravel()
        keep = ((np.abs(P) >= self.start) & (np.abs(Q) >= self.start)).ravel()
        keep &= np.abs(a) > self.radius
        keep &= np.abs(a - z) <= window
        a = a[keep]
        return a, self.coeff(np.abs(a)).astype(np.complex128)

    def remainder_bound(self, z, window):
        """Bound on |sum (b/(z-a))^M| over non-explicit poles farther than
        ``window`` from z.
        """
        m = self.mult
        rho = abs(z)
        rt = self.radius

        def log_g(r):
            return m * self.log_coeff(r)

        total = mp.mpf(0)
        # |a| >= 2|z|: |z - a| >= |a|/2
        ra = max(rt, 2 * rho)
        total += mp.exp(lattice_sum_upper(
            lambda r: m * (mp.log(2) + self.log_coeff(r) - mp.log(r)), ra))
        # Rt < |a| <= |z|/2: |z - a| >= |z|/2
        if rho / 2 > rt:
            total += (2 / mp.mpf(rho)) ** m * mp.exp(lattice_sum_upper(log_g, rt, rho / 2))
        # remaining annulus, at distance > window
        if 2 * rho > rt:
            gmax = mp.exp(log_g(max(rt, rho / 2)))
            w0 = max(window, 2 * CELL)
            shell = log_radial_integral(
                lambda r: mp.log(2 * mp.pi * r) - m * mp.log(max(r - CELL, w0)),
                w0 - CELL, 3 * rho + CELL)
            total += gmax * mp.exp(shell)
        return float(total)

    # weight series ---------------------------------------------------------
    def weight_tail_log_upper(self, rmin, t, mu):
        lo = max(rmin, self.radius)
        if t <= 0:
            return math.inf
        if self.kind == "power":
            return power_sum_log_upper((self.alpha + 1 + 1.0 / mu) * t, lo)
        return exp_sum_log_upper(t, 1 + 1.0 / mu, lo)

    def order_tail_log_upper(self, rmin, t):
        return power_sum_log_upper(t, max(rmin, self.radius))


def power_sum_log_upper(q, r1):
    """log upper bound of sum over lattice points |a| > r1 of |a|^-q (closed
    form of the comparison integral used by :func:`lattice_sum_upper`)."""
    if q <= 2 * (1 + 1e-12):
        return math.inf
    q, r1 = mp.mpf(q), mp.mpf(r1)
    s = mp.mpf(CELL)
    val = (4 * mp.pi * r1 * s * r1 ** -q
           + 2 * mp.pi * (r1 ** (2 - q) / (q - 2) + s * r1 ** (1 - q) / (q - 1)))
    return float(mp.log(val))


def exp_sum_log_upper(t, p, r1):
    """log upper bound of sum over lattice points |a| > r1 of
    (exp(-|a|) |a|^-p)^t, from the same comparison integral."""
    if t <= 0:
        return math.inf
    t, r1 = mp.mpf(t), mp.mpf(r1)
    s = mp.mpf(CELL)
    val = 4 * mp.pi * r1 * s + 2 * mp.pi * ((r1 + s) / t + 1 / t ** 2)
    return float(-t * r1 - p * t * mp.log(r1) + mp.log(val))


class LogPoleTail:
    """Poles a_j = log j, b_j = exp(-j), explicit for j <= last."""

    def __init__(self, last):
        self.last = int(last)

    def remainder_bound(self, z, window=None):
        x0 = math.log(self.last + 1)
        if z.real >= x0:
            d = abs(z.imag)
        else:
            d = abs(z - x0)
        if d == 0:
            raise TailUnbounded("point lies on the accumulation ray of the pole tail")
        return float(mp.exp(-(self.last + 1)) / (1 - mp.exp(-1)) / d)

    def weight_tail_log_upper(self, rmin, t, mu):
        if t <= 0:
            return math.inf
        j0 = mp.mpf(self.last + 1)
        if rmin > math.log(self.last + 1):
            j0 = max(j0, mp.ceil(mp.exp(rmin)))
        return float(-t * j0 - (1 + mp.mpf(1) / mu) * t * mp.log(mp.log(j0))
                     - mp.log(1 - mp.exp(-t)))


class GammaTail:
    """Poles a_j = -j - shift, b_j = (-1)^j / j!, explicit for j <= last."""

    def __init__(self, last, shift):
        self.last = int(last)
        self.shift = complex(shift)

    def remainder_bound(self, z, window=None):
        # distance from z to the ray {-x - shift : x >= last + 1}
        w = -(z + self.shift)
        x0 = self.last + 1
        d = abs(w.imag) if w.real >= x0 else abs(w - x0)
        if d == 0:
            raise TailUnbounded("point lies on the ray of tail poles")
        return float(mp.exp(-mp.loggamma(self.last + 2)) / (1 - mp.mpf(1) / (self.last + 2)) / d)

    def weight_tail_log_upper(self, rmin, t, mu):
        if t <= 0:
            return math.inf
        s = abs(self.shift)
        j0 = max(self.last + 1, int(math.ceil(rmin + s)) + 1)
        p = 1 + 1.0 / mu
        logw0 = -mp.loggamma(j0 + 1) - p * mp.log(abs(j0 + self.shift))
        ratio = (mp.mpf(1) / (j0 + 1)) * ((j0 + s) / (j0 + 1 - s)) ** p
        if ratio >= 1:
            return math.inf
        return float(t * logw0 - mp.log(1 - ratio ** t))
