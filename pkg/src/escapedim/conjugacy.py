"""The conjugated inverse branches, with their radii budget and cone.

Points of the IFS domain Omega are carried in *pullback form*: the value
w = chart(xi) in the dynamical plane, plus (when xi is the image of an inverse
branch) the pole a_j and the offset delta = chart(xi) - a_j. The offsets are tens
of orders of magnitude below the spacing of doubles at |a_j|, so keeping them
separately keeps the maps and their derivatives computable in double
precision. A multiprecision path (``phi_map_mp``) is
provided as an independent finite-difference oracle.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Tuple

import mpmath as mp
import numpy as np
from scipy.spatial import ConvexHull

from .critexp import profile_from_field, critical_exponent
from .errors import (BadParameter, NoConvergence, NoMaxPolesInAnyCone, OutOfDomain, PoolExhausted,
                     BranchCollision)
from .polefield.evaluation import local_eval, local_rest, resolve
from .polefield.inverse import COLLISION, NO_CONVERGENCE, KOEBE_K, base_radius, solve_offsets
from .polefield.model import index_array
from .nais import ContractionFamily, _logsumexp
from .polefield.tails import CELL, LatticeTail, lattice_index

TWO_PI = 2 * math.pi
CONE_FRACTION = 0.75
HEAD_POLES_REQUIRED = 25
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# radii
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadiiBudget:
    R0: float
    R1: float
    R2: float
    K: float
    L: float
    M: int
    usable_explicit_poles: int = 0
    far_field: bool = False

    def __post_init__(self):
        if self.R1 ** (1.0 / self.M) < self.L * self.K * 2 ** (self.M + 1) * self.R0 * (1 - 1e-12):
            raise BadParameter("R1 violates R1^(1/M) >= L K 2^(M+1) R0")
        if self.R2 < 2 * self.K ** (2 * self.M) * self.R1 * (1 - 1e-12):
            raise BadParameter("R2 violates R2 >= 2 K^(2M) R1")

    def to_dict(self):
        return dict(R0=self.R0, R1=self.R1, R2=self.R2, K=self.K, L=self.L, M=self.M,
                    usable_explicit_poles=self.usable_explicit_poles, far_field=self.far_field)


def _pow2_at_least(x):
    return 2.0 ** max(0, math.ceil(math.log2(x) - 1e-12))


def admissible_radii(f, K=KOEBE_K):
    """Smallest power-of-two radii meeting the budget inequalities."""
    if K < 1:
        raise BadParameter("K must be at least 1")
    R0 = base_radius(f, strict=True)
    M = f.max_mult
    L = 2.0 * M * K
    need = max(2.0 ** M * R0, (L * K * 2 ** (M + 1) * R0) ** M,
               (2.0 ** (M + 1) * K * K * R0) ** M)
    R1 = _pow2_at_least(need)
    R2 = _pow2_at_least(2 * K ** (2 * M) * R1)
    usable = int(np.count_nonzero(np.abs(f.locations) > R1))
    return RadiiBudget(R0, R1, R2, float(K), L, M, usable, isinstance(f.far, LatticeTail))


# ---------------------------------------------------------------------------
# cones
# ---------------------------------------------------------------------------

def _angle_in(theta, start, width):
    return 0.0 < (theta - start) % TWO_PI < width


@dataclass(frozen=True)
class ConeSpec:
    alpha: float
    aperture_fraction: float = CONE_FRACTION
    widened: bool = False

    def __post_init__(self):
        if not 0 < self.aperture_fraction < 1:
            raise BadParameter("aperture fraction must lie in (0, 1)")

    @property
    def aperture(self):
        return TWO_PI * self.aperture_fraction

    @property
    def bisector(self):
        return self.alpha + 0.5 * self.aperture

    def contains_angle(self, theta, margin=0.0):
        return _angle_in(theta, self.alpha + margin, self.aperture - 2 * margin)

    def contains(self, z, rmin=0.0):
        z = complex(z)
        return abs(z) > rmin and self.contains_angle(math.atan2(z.imag, z.real))

    def widen(self):
        """The enlarged cone (alpha - pi/8, alpha + 2 pi 13/16)."""
        lo = self.alpha - math.pi / 8
        return ConeSpec(lo, (2 * math.pi * 13 / 16 - lo + self.alpha) / TWO_PI, True)

    def to_dict(self):
        return {"alpha": self.alpha, "aperture_fraction": self.aperture_fraction,
                "widened": self.widened}


def select_cone(f, t_probe=None, grid=64):
    """A 3/4-turn cone rich in poles of maximal multiplicity.

    Isotropic tails make every direction equivalent (alpha = 0). Tails
    concentrated on rays force the cone to contain them. Otherwise the cone
    maximising the head mass sum w_j^t over maximal-multiplicity poles wins,
    provided it holds at least 25 of them; ties go to the smallest alpha.
    """
    M = f.max_mult
    tail = f.weight_tails.get(M)
    angles = TWO_PI * np.arange(grid) / grid
    if tail is not None and tail.kind != "none" and tail.directions is not None:
        if tail.directions == "isotropic":
            return ConeSpec(0.0)
        rays = tuple(tail.directions)
        margin = TWO_PI / grid
        best, best_n = None, -1
        for a in angles:
            c = ConeSpec(float(a))
            n = sum(c.contains_angle(r, margin) for r in rays)
            if n > best_n:
                best, best_n = c, n
        if best_n < 1:
            raise NoMaxPolesInAnyCone("no cone contains a tail ray")
        return best
    if t_probe is None:
        est = critical_exponent(profile_from_field(f))
        t_probe = max(0.0, est.value - 0.05)
    sel = f.mults == M
    a = f.locations[sel]
    w = np.abs(f.coeffs[sel]) / np.abs(a) ** (1 + 1.0 / M)
    ang = np.angle(a)
    best, best_mass = None, -1.0
    for al in angles:
        inside = ((ang - al) % TWO_PI > 0) & ((ang - al) % TWO_PI < TWO_PI * CONE_FRACTION)
        if np.count_nonzero(inside) < HEAD_POLES_REQUIRED:
            continue
        mass = float(np.sum(w[inside] ** t_probe))
        if mass > best_mass * (1 + 1e-12):
            best, best_mass = ConeSpec(float(al)), mass
    if best is None or (tail is None or tail.kind == "none") and not len(a):
        raise NoMaxPolesInAnyCone("no cone holds enough poles of maximal multiplicity")
    return best


# ---------------------------------------------------------------------------
# brackets and domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivativeBracket:
    lo: float
    hi: float
    constant: float

    def __post_init__(self):
        if not 0 < self.lo <= self.hi:
            raise BadParameter("bracket needs 0 < lo <= hi")

    @classmethod
    def around(cls, log_center, constant):
        c = math.exp(log_center)
        return cls(c / constant, c * constant, constant)

    @property
    def center(self):
        return math.sqrt(self.lo * self.hi)

    def contains(self, x, rel=0.0):
        return self.lo * (1 - rel) <= x <= self.hi * (1 + rel)


class OmegaDomain:
    """Image of the widened cone beyond R2 under the fixed branch of u^-1:
    a sector of radius R2^(-1/M) around direction -bisector/M."""

    def __init__(self, cone: ConeSpec, R2, M):
        self.cone = cone
        self.R2 = float(R2)
        self.M = int(M)
        self.bisector = cone.bisector
        self.half_width = 7 * math.pi / 8  # of the widened cone, around its bisector
        self.radius = self.R2 ** (-1.0 / self.M)
        lo = -(self.bisector + self.half_width) / self.M
        hi = -(self.bisector - self.half_width) / self.M
        self.arg_range = (lo, hi)
        arc = np.linspace(lo, hi, 257)
        pts = np.vstack([[0.0, 0.0], np.column_stack([self.radius * np.cos(arc),
                                                     self.radius * np.sin(arc)])])
        hull = ConvexHull(pts)
        self.hull_vertices = pts[hull.vertices]
        self._eq = hull.equations

    @property
    def center(self):
        return 0.5 * self.radius * complex(math.cos(-self.bisector / self.M),
                                           math.sin(-self.bisector / self.M))

    @property
    def diameter(self):
        v = self.hull_vertices
        return float(np.max(np.hypot(v[:, None, 0] - v[None, :, 0], v[:, None, 1] - v[None, :, 1])))

    def contains(self, xi):
        xi = complex(xi)
        if not 0 < abs(xi) < self.radius:
            return False
        lo, hi = self.arg_range
        return 0 < (math.atan2(xi.imag, xi.real) - lo) % TWO_PI < hi - lo

    def in_hull(self, xi, tol=1e-12):
        xi = np.atleast_1d(np.asarray(xi, dtype=complex))
        p = np.column_stack([xi.real, xi.imag])
        return np.all(p @ self._eq[:, :2].T + self._eq[:, 2] <= tol * self.radius, axis=1)

    def sample(self, n, rng, rmin=0.05, rmax=0.95):
        lo, hi = self.arg_range
        margin = 0.02 * (hi - lo)
        r = self.radius * rng.uniform(rmin, rmax, n)
        a = rng.uniform(lo + margin, hi - margin, n)
        return r * np.exp(1j * a)

    def to_dict(self):
        return {"radius": self.radius, "arg_range": list(self.arg_range),
                "hull_vertices": self.hull_vertices.tolist()}


# ---------------------------------------------------------------------------
# the system
# ---------------------------------------------------------------------------

@dataclass
class ConjugatedSystem:
    field: object
    budget: RadiiBudget
    cone: ConeSpec
    omega: OmegaDomain
    selected_max_poles: Tuple[int, ...]
    branch_choices: dict
    ordinal_source: str
    _explicit_order: Optional[np.ndarray] = dc_field(default=None, repr=False)

    # -- change of variables -------------------------------------------------
    @property
    def M(self):
        return self.budget.M

    def chart(self, xi):
        return np.asarray(xi, dtype=complex) ** (-self.M)

    def _phase(self, z):
        """arg z - bisector, wrapped to (-pi, pi]."""
        return np.angle(np.asarray(z, dtype=complex) * np.exp(-1j * self.omega.bisector))

    def chart_inv(self, z, check=True):
        z = np.asarray(z, dtype=complex)
        phi = self._phase(z)
        if check and (np.any(np.abs(phi) >= self.omega.half_width)
                      or np.any(np.abs(z) <= self.budget.R2)):
            raise OutOfDomain("point outside the widened cone beyond R2")
        return np.abs(z) ** (-1.0 / self.M) * np.exp(-1j * (self.omega.bisector + phi) / self.M)

    def inv_root(self, w, m):
        """w^(-1/m) on the branch whose cut lies outside the widened cone."""
        phi = self._phase(w)
        return np.abs(w) ** (-1.0 / m) * np.exp(-1j * (self.omega.bisector + phi) / m)

    # -- poles ------------------------------------------------------------
    def pole_at(self, ordinal):
        """Pole index of the given ordinal among the poles of the cone beyond 2 R2."""
        ordinal = int(ordinal)
        if ordinal < 0:
            raise BadParameter("ordinals are non-negative")
        if self._explicit_order is not None:
            if ordinal >= self._explicit_order.size:
                raise OutOfDomain(f"ordinal {ordinal} exceeds the explicit poles in the cone")
            return int(self._explicit_order[ordinal])
        return _lattice_pole_at(self, ordinal)

    def max_pole(self, l):
        """Pole index of the l-th selected maximal-multiplicity pole (l >= 1)."""
        if l < 1:
            raise BadParameter("max-pole labels start at 1")
        if l <= len(self.selected_max_poles):
            return self.selected_max_poles[l - 1]
        if self._explicit_order is None:
            return self.pole_at(l - 1)
        raise OutOfDomain(f"max pole {l} not available")

    def in_cone(self, index):
        p = self.field.pole(index)
        return self.cone.contains(p.location, 2 * self.budget.R2)

    def _require(self, indices):
        for k in set(int(i) for i in np.atleast_1d(indices)):
            if not self.in_cone(k):
                raise OutOfDomain(f"pole {k} is not in the cone beyond 2 R2")

    # -- inverse branches in pullback form ------------------------------------
    def pull(self, indices, w):
        """Offsets delta with f(a_j + delta) = w on the recorded branch, and
        log |phi_j'| at the point xi = u_*^-1(w)."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        indices = np.broadcast_to(index_array(indices), w.shape)
        if np.any(np.abs(w) <= self.budget.R2) or np.any(np.abs(self._phase(w)) >= self.omega.half_width):
            raise OutOfDomain("target outside the widened cone beyond R2")
        res = resolve(self.field, indices)
        a, b, m, pos = res
        delta, status, _ = solve_offsets(self.field, indices, w, 0, resolved=res,
                                         inv_root=self.inv_root(w, m))
        if np.any(status == NO_CONVERGENCE):
            raise NoConvergence("inverse branch failed to converge")
        if np.any(status == COLLISION):
            raise BranchCollision("inverse branch left its seed sector")
        _, df = local_eval(self.field, indices, delta, resolved=res)
        z = a + delta
        M = self.M
        logd = ((M + 1.0) / M * np.log(np.abs(w)) - (1.0 / M + 1) * np.log(np.abs(z))
                - np.log(np.abs(df)))
        return delta, logd

    def xi_of(self, pole, delta):
        """u_*^-1(a + delta) computed without forming a + delta."""
        a = self.field.pole(pole).location
        return complex(self.chart_inv(a)) * (1 + delta / a) ** (-1.0 / self.M)

    def to_dict(self):
        poles = []
        for k in self.selected_max_poles:
            p = self.field.pole(k)
            poles.append({"index": str(k), "location": [p.location.real, p.location.imag],
                          "coeff": [p.coeff.real, p.coeff.imag], "mult": p.multiplicity})
        return {"field": self.field.describe(), "budget": self.budget.to_dict(),
                "cone": self.cone.to_dict(), "omega": self.omega.to_dict(),
                "branch_choices": self.branch_choices, "ordinal_source": self.ordinal_source,
                "selected_max_poles": poles}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _lattice_ring(sys):
    far = sys.field.far
    return 2 * sys.budget.R2 + 1.0, sys.cone.aperture, far.start


def ordinal_radius(r0, theta, i):
    """Continuous counting model: about i lattice points of the cone lie
    between radii r0 and r(i)."""
    return mp.sqrt(mp.mpf(r0) ** 2 + 2 * mp.mpf(i) / theta)


def _lattice_pole_at(sys, ordinal):
    r0, theta, start = _lattice_ring(sys)
    r = float(ordinal_radius(r0, theta, ordinal))
    if r > 2.0 ** 52:
        raise OutOfDomain("ordinal too large to realise as an exact lattice point")
    margin = 2.0 * (start + 2) / r
    frac = float(mp.frac(mp.mpf(ordinal) * mp.mpf(GOLDEN)))
    for k in range(64):
        ang = sys.cone.alpha + margin + frac * (theta - 2 * margin)
        p, q = int(round(r * math.cos(ang))), int(round(r * math.sin(ang)))
        a = complex(p, q)
        if (abs(p) >= start and abs(q) >= start and abs(a) > 2 * sys.budget.R2
                and sys.cone.contains(a)):
            return lattice_index(p, q)
        frac = (frac + 1e-9 * (k + 1)) % 1.0
    raise OutOfDomain(f"could not realise ordinal {ordinal}")


def build_system(f, K=KOEBE_K, t_probe=None, n_max_poles=64, cone=None):
    """Assemble the conjugated system: budget and cone first, then the maximal poles."""
    budget = admissible_radii(f, K)
    cone = cone if cone is not None else select_cone(f, t_probe)
    omega = OmegaDomain(cone, budget.R2, budget.M)
    branch = {
        "chart_inverse": "|z|^(-1/M) exp(-i(theta_b + phi)/M), phi = arg z - theta_b in (-7pi/8, 7pi/8)",
        "bisector": cone.bisector,
        "f_inverse": "branch 0: seed b * w^(-1/m) with the same cut as chart_inverse",
    }
    if isinstance(f.far, LatticeTail):
        sys = ConjugatedSystem(f, budget, cone, omega, (), branch, "lattice_counting_model")
        sel = tuple(sys.pole_at(i) for i in range(n_max_poles))
        if len(set(sel)) != len(sel):
            raise BadParameter("realised maximal poles are not distinct")
        sys.selected_max_poles = sel
        return sys
    a = f.locations
    inside = np.array([cone.contains(z, 2 * budget.R2) for z in a], dtype=bool) if len(f) else np.zeros(0, bool)
    order = np.flatnonzero(inside)
    order = order[np.argsort(np.abs(a[order]), kind="stable")]
    idx = f.indices[order]
    maxp = tuple(int(k) for k, m in zip(idx, f.mults[order]) if m == f.max_mult)
    if not maxp:
        raise NoMaxPolesInAnyCone("no explicit maximal-multiplicity pole lies in the cone beyond 2 R2")
    return ConjugatedSystem(f, budget, cone, omega, maxp[:n_max_poles], branch,
                            "explicit_head", np.asarray(idx, dtype=np.int64))


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------

def _check_xi(sys, xi):
    if not sys.omega.contains(xi):
        raise OutOfDomain(f"xi={xi} is not in Omega")


def phi_offset(sys, j, xi):
    """delta with chart(phi_j(xi)) = a_j + delta."""
    _check_xi(sys, xi)
    sys._require([j])
    delta, _ = sys.pull([j], [complex(xi) ** (-sys.M)])
    return complex(delta[0])


def phi_map(sys, j, xi):
    return sys.xi_of(j, phi_offset(sys, j, xi))


def phi_derivative(sys, j, xi):
    """|phi_j'(xi)| by the chain rule."""
    _check_xi(sys, xi)
    sys._require([j])
    _, logd = sys.pull([j], [complex(xi) ** (-sys.M)])
    return float(math.exp(logd[0]))


def _log_weight(p, M):
    return math.log(abs(p.coeff)) - (1 + 1.0 / M) * math.log(abs(p.location))


def phi_derivative_bracket(sys, j, xi):
    _check_xi(sys, xi)
    sys._require([j])
    p = sys.field.pole(j)
    M = sys.M
    logc = _log_weight(p, M) + (M / p.multiplicity - 1) * math.log(abs(xi))
    return DerivativeBracket.around(logc, 2 * sys.budget.K * M)


def Phi_log_center(sys, l, j):
    M = sys.M
    pl = sys.field.pole(sys.max_pole(l))
    pj = sys.field.pole(j)
    return (2 * math.log(abs(pl.coeff))
            - (2 + 1.0 / pj.multiplicity + 1.0 / M) * math.log(abs(pl.location))
            + _log_weight(pj, M))


def Phi_derivative_bracket(sys, l, j):
    return DerivativeBracket.around(Phi_log_center(sys, l, j), 2 * sys.budget.L ** 3)


@dataclass
class PullbackState:
    """Arrays describing points of Omega: w = chart(xi) and, when known, the pole
    and offset with w = a + delta. ``chain`` lists the (pole, delta) pairs
    produced so far, outermost first."""

    w: np.ndarray
    pole: Optional[np.ndarray] = None
    delta: Optional[np.ndarray] = None
    chain: list = dc_field(default_factory=list)
    origin: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.origin is None:
            self.origin = self.w

    @classmethod
    def from_xi(cls, sys, xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=complex))
        for x in xi:
            _check_xi(sys, x)
        return cls(sys.chart(xi))

    def xi(self, sys):
        if self.pole is None:
            return sys.chart_inv(self.w, check=False)
        return np.array([sys.xi_of(int(p), d) for p, d in zip(self.pole, self.delta)])


def apply_Phi(sys, l, j, state: PullbackState):
    """Phi_{l,j} on a batch of points; returns the new state and log|Phi'|."""
    n = state.w.size
    lp = np.broadcast_to(index_array([sys.max_pole(int(x)) for x in np.atleast_1d(l)]), (n,))
    jp = np.broadcast_to(index_array(j), (n,))
    sys._require(np.concatenate([lp, jp]))
    logd = np.zeros(n)
    w = state.w
    links = []
    for p in (lp, jp, lp):
        delta, ld = sys.pull(p, w)
        logd += ld
        a = resolve(sys.field, p)[0]
        links.append((p.copy(), delta))
        w = a + delta
    chain = links[::-1] + state.chain
    return PullbackState(w, lp.copy(), links[-1][1], chain, state.origin), logd


def Phi_map(sys, l, j, xi):
    st, _ = apply_Phi(sys, [l], [j], PullbackState.from_xi(sys, [xi]))
    return complex(st.xi(sys)[0])


def Phi_derivative(sys, l, j, xi):
    _, ld = apply_Phi(sys, [l], [j], PullbackState.from_xi(sys, [xi]))
    return float(math.exp(ld[0]))


def branch_derivative(sys, j, k_pole, offsets):
    """Modulus of the derivative of the inverse branch at pole j, evaluated at
    points offset from the location of pole k_pole."""
    ak = sys.field.pole(k_pole).location
    offsets = np.atleast_1d(np.asarray(offsets, dtype=complex))
    z = ak + offsets
    jj = np.broadcast_to(index_array([int(j)]), z.shape)
    res = resolve(sys.field, jj)
    delta, status, _ = solve_offsets(sys.field, jj, z, 0, resolved=res)
    if np.any(status != 0):
        raise NoConvergence("inverse branch failed")
    _, df = local_eval(sys.field, jj, delta, resolved=res)
    return 1.0 / np.abs(df)


def distortion_estimate(sys, composition, samples=64, seed=0):
    """Sampled sup/inf of |F'| over Omega for F = Phi_{c_1} o ... o Phi_{c_n}.

    Returns ``(ratio, modulus)``, the modulus being the annulus lower bound
    log 2 / (2 pi M) that controls the distortion constant.
    """
    if not composition:
        raise BadParameter("composition must be non-empty")
    rng = np.random.default_rng(seed)
    state = PullbackState.from_xi(sys, sys.omega.sample(samples, rng))
    total = np.zeros(samples)
    for l, j in reversed(list(composition)):
        state, ld = apply_Phi(sys, [l], [j], state)
        total += ld
    ratio = float(math.exp(total.max() - total.min()))
    return ratio, math.log(2.0) / (TWO_PI * sys.M)


# ---------------------------------------------------------------------------
# multiprecision oracle
# ---------------------------------------------------------------------------

class _FrozenRest:
    """Smooth part of f near a pole, frozen to first order at a reference
    offset (its variation over the tiny sets involved is far below the
    working precision of the singular part)."""

    def __init__(self, sys, j, w_ref):
        self.res = resolve(sys.field, [j])
        delta, _ = sys.pull([j], [complex(w_ref)])
        r, dr = local_rest(sys.field, self.res, delta)
        self.d0 = mp.mpc(complex(delta[0]))
        self.r0 = mp.mpc(complex(r[0]))
        self.r1 = mp.mpc(complex(dr[0]))
        self.a = mp.mpc(complex(self.res[0][0]))
        self.b = mp.mpc(complex(self.res[1][0]))
        self.m = int(self.res[2][0])


def _chart_inv_mp(sys, z):
    th = mp.mpf(sys.omega.bisector)
    phi = mp.arg(z * mp.expj(-th))
    return abs(z) ** (mp.mpf(-1) / sys.M) * mp.expj(-(th + phi) / sys.M)


def _pull_mp(sys, fr: _FrozenRest, w, iters=80):
    th = mp.mpf(sys.omega.bisector)
    phi = mp.arg(w * mp.expj(-th))
    root = abs(w) ** (mp.mpf(-1) / fr.m) * mp.expj(-(th + phi) / fr.m)
    d = fr.b * root
    tol = mp.mpf(10) ** (-mp.mp.dps + 10) * abs(w)
    for _ in range(iters):
        s = (fr.b / d) ** fr.m
        g = s + fr.r0 + fr.r1 * (d - fr.d0) - w
        dg = fr.r1 - fr.m * s / d
        step = g / dg
        d -= step
        if abs(g) <= tol:
            break
    return d


def phi_map_mp(sys, j, xi, frozen=None):
    """phi_j(xi) in multiprecision; returns (value, delta)."""
    w = mp.mpc(xi) ** (-sys.M)
    fr = frozen or _FrozenRest(sys, j, complex(w))
    d = _pull_mp(sys, fr, w)
    return _chart_inv_mp(sys, fr.a + d), d


def fd_derivative_mp(fun, xi, rel_step=mp.mpf("1e-20")):
    """|F'(xi)| by a central difference in multiprecision."""
    h = abs(mp.mpc(xi)) * rel_step
    return abs(fun(mp.mpc(xi) + h) - fun(mp.mpc(xi) - h)) / (2 * h)


def fd_phi_derivative(sys, j, xi, dps=80):
    with mp.workdps(dps):
        fr = _FrozenRest(sys, j, complex(xi) ** (-sys.M))
        return float(fd_derivative_mp(lambda x: phi_map_mp(sys, j, x, fr)[0], xi))


def fd_Phi_derivative(sys, l, j, xi, dps=160):
    """Finite-difference |Phi_{l,j}'(xi)| in multiprecision, with the smooth
    parts frozen along the central pullback chain."""
    lp = sys.max_pole(l)
    with mp.workdps(dps):
        x0 = mp.mpc(xi)
        frs = []
        w = x0 ** (-sys.M)
        for p in (lp, j, lp):
            fr = _FrozenRest(sys, p, complex(w))
            frs.append(fr)
            w = fr.a + _pull_mp(sys, fr, w)

        def F(x):
            v = x ** (-sys.M)
            for fr in frs:
                v = fr.a + _pull_mp(sys, fr, v)
            return _chart_inv_mp(sys, v)

        return float(fd_derivative_mp(F, x0))


# ---------------------------------------------------------------------------
# weight pools for the IFS {Phi_{l,j}}
# ---------------------------------------------------------------------------

class LatticeConePool:
    """Weights of Phi_{l,j} over the lattice poles of the cone beyond 2 R2.

    Ordinal i stands for the lattice points counted up to the radius
    ``ordinal_radius(r0, theta, i)``. Masses over an ordinal range are the
    rigorous annulus bounds for lattice sums of the per-pole bracket ends
    (lower: cells fully inside the annulus, minus the cone edges and the
    excluded strips; upper: every cell meeting it), evaluated in closed form
    in multiprecision so that block ends far beyond 2**63 are exact integers.
    """

    LIMIT_LOG_RADIUS = 20000.0

    def __init__(self, sys):
        far = sys.field.far
        if not isinstance(far, LatticeTail) or far.kind != "power":
            raise BadParameter("the cone pool needs a power-law lattice field")
        self.sys = sys
        self.r0, self.theta, self.strip = _lattice_ring(sys)
        M = sys.M
        self.q = far.alpha + 1 + 1.0 / M
        self.log_c = math.log(2 * sys.budget.L ** 3)
        self.loss = math.pi * CELL + 4 * math.pi * (self.strip + 0.5)
        self._label_cache = {}

    def first_index(self, label):
        return label - 1

    def log_label(self, label):
        if label not in self._label_cache:
            self._label_cache[label] = Phi_log_center(self.sys, label, self.sys.max_pole(label)) \
                - _log_weight(self.sys.field.pole(self.sys.max_pole(label)), self.sys.M)
        return self._label_cache[label]

    def radius(self, ordinal):
        return ordinal_radius(self.r0, self.theta, ordinal)

    @staticmethod
    def _power_integral(e, a, b):
        """log of int_a^b x^e dx, a < b."""
        if abs(e + 1) < mp.mpf(10) ** (-mp.mp.dps + 5):
            return mp.log(mp.log(b) - mp.log(a))
        v = (b ** (e + 1) - a ** (e + 1)) / (e + 1)
        return mp.log(v) if v > 0 else -mp.inf

    def _log_lo_radial(self, r1, r2, p):
        """log of int (r+s)^-p (theta r - loss) dr over [r1+s, r2-s], clipped
        to where the density is positive."""
        s = mp.mpf(CELL)
        a = max(r1 + s, mp.mpf(2 * self.loss / self.theta))
        b = r2 - s
        if b <= a:
            return -mp.inf
        A, B = a + s, b + s
        t1 = self._power_integral(1 - p, A, B) + mp.log(self.theta)
        t2 = self._power_integral(-p, A, B) + mp.log(self.theta * s + self.loss)
        if t2 >= t1:
            return -mp.inf
        return t1 + mp.log(1 - mp.exp(t2 - t1))

    def _log_hi_radial(self, r1, r2, p):
        s = mp.mpf(CELL)
        th = mp.mpf(self.theta)
        inner = -p * mp.log(r1) + mp.log(th * 2 * r1 * s + 2 * mp.pi * s * s)
        parts = [inner,
                 self._power_integral(1 - p, r1, r2) + mp.log(th),
                 self._power_integral(-p, r1, r2) + mp.log(th * s + mp.pi * s)]
        return _mp_logsumexp(parts)

    def log_mass(self, label, start, stop, t, side="lo"):
        if stop <= start:
            return -math.inf
        with mp.workdps(40):
            r1, r2 = self.radius(start), self.radius(stop)
            p = mp.mpf(self.q) * t
            base = self.log_label(label) + (-self.log_c if side == "lo" else self.log_c)
            radial = self._log_lo_radial(r1, r2, p) if side == "lo" else self._log_hi_radial(r1, r2, p)
            return float(radial + t * base)

    def find_stop(self, label, start, t, log_target):
        with mp.workdps(40):
            r1 = self.radius(start)
            p = mp.mpf(self.q) * t
            shift = t * (self.log_label(label) - self.log_c)

            def mass(x):
                return self._log_lo_radial(r1, mp.exp(x), p) + shift

            a = mp.log(r1)
            step = mp.mpf(1)
            b = a + step
            while mass(b) < log_target:
                a, step = b, step * 2
                b = a + step
                if b > self.LIMIT_LOG_RADIUS:
                    raise PoolExhausted(f"block {label} needs radii beyond exp({self.LIMIT_LOG_RADIUS:g})")
            for _ in range(200):
                if b - a <= mp.mpf(10) ** -25 * b:
                    break
                mid = (a + b) / 2
                if mass(mid) >= log_target:
                    b = mid
                else:
                    a = mid
            R = mp.exp(b)
            stop = int(mp.ceil(self.theta * (R * R - mp.mpf(self.r0) ** 2) / 2)) + 1
        while self.log_mass(label, start, stop, t, "lo") < log_target:
            stop += max(1, stop // 10 ** 12)
        return stop

    def log_sup(self):
        # largest |Phi'| upper bound: nearest pole of the ring, any early label
        labels = range(1, min(len(self.sys.selected_max_poles), 64) + 1)
        top = max(self.log_label(l) for l in labels)
        return top - self.q * math.log(self.r0) + self.log_c


def _mp_logsumexp(xs):
    xs = [x for x in xs if x != -mp.inf]
    if not xs:
        return -mp.inf
    top = max(xs)
    return top + mp.log(mp.fsum(mp.exp(x - top) for x in xs))


class ExplicitConePool:
    """Pool over the explicit head poles of the cone beyond 2 R2."""

    def __init__(self, sys):
        idx = sys._explicit_order
        if idx is None or not idx.size:
            raise BadParameter("no explicit poles in the cone")
        poles = [sys.field.pole(int(k)) for k in idx]
        self.sys = sys
        self.log_w = np.array([_log_weight(p, sys.M) for p in poles])
        self.inv_m = np.array([1.0 / p.multiplicity for p in poles])
        self.log_c = math.log(2 * sys.budget.L ** 3)

    def first_index(self, label):
        return label - 1

    def _terms(self, label, start, stop, t, side):
        if stop > self.log_w.size:
            raise PoolExhausted("explicit poles of the cone run out")
        pl = self.sys.field.pole(self.sys.max_pole(label))
        la = math.log(abs(pl.location))
        centre = (2 * math.log(abs(pl.coeff)) - (2 + 1.0 / self.sys.M) * la
                  - self.inv_m[start:stop] * la + self.log_w[start:stop])
        return t * (centre + (-self.log_c if side == "lo" else self.log_c))

    def log_mass(self, label, start, stop, t, side="lo"):
        return _logsumexp(self._terms(label, start, stop, t, side))

    def find_stop(self, label, start, t, log_target):
        n = self.log_w.size
        if start >= n:
            raise PoolExhausted("explicit poles of the cone run out")
        acc = np.logaddexp.accumulate(self._terms(label, start, n, t, "lo"))
        hit = np.flatnonzero(acc >= log_target - 1e-12)
        if not hit.size:
            raise PoolExhausted("explicit poles of the cone run out")
        return start + int(hit[0]) + 1

    def log_sup(self):
        n = self.log_w.size
        labels = range(1, min(len(self.sys.selected_max_poles), 8) + 1)
        return max(float(np.max(self._terms(l, 0, n, 1.0, "hi"))) for l in labels)


def cone_pool(sys):
    if sys._explicit_order is None:
        return LatticeConePool(sys)
    return ExplicitConePool(sys)


def conjugated_family(sys, distortion=None):
    """The IFS {Phi_{l,j}} as a ContractionFamily acting on pullback states."""
    pool = cone_pool(sys)

    def apply(label, ordinals, state):
        poles = index_array([sys.pole_at(int(i)) for i in ordinals])
        return apply_Phi(sys, [label], poles, state)[0]

    def center(n):
        return PullbackState.from_xi(sys, np.full(n, sys.omega.center))

    def points(state):
        return state.xi(sys)

    if distortion is None:
        distortion = 2 * sys.budget.L ** 3
    return ContractionFamily(pool, float(distortion), apply, center, points,
                             sys.omega.diameter, f"conjugated:{sys.field.family_tag}")


def forward_certificate(sys, state: PullbackState, horizon=20, rel_tol=1e-8):
    """Check the forward orbits recorded in pullback chains.

    For each point, step k of the orbit is the chain entry (pole, delta);
    f evaluated in local coordinates at a + delta must reproduce the next
    entry (or the final target) to ``rel_tol``, and every point visited must
    have modulus >= R2. Returns (ok flags, min modulus per orbit, worst
    relative residual per orbit).
    """
    n = state.w.size
    steps = min(int(horizon), len(state.chain))
    ok = np.ones(n, dtype=bool)
    minmod = np.full(n, np.inf)
    worst = np.zeros(n)
    for k in range(steps):
        pole, delta = state.chain[k]
        a = resolve(sys.field, pole)[0]
        z = a + delta
        minmod = np.minimum(minmod, np.abs(z))
        fz, _ = local_eval(sys.field, pole, delta)
        if k + 1 < len(state.chain):
            nxt_pole, nxt_delta = state.chain[k + 1]
            target = resolve(sys.field, nxt_pole)[0] + nxt_delta
        else:
            target = state.origin
        res = np.abs(fz - target) / np.abs(target)
        worst = np.maximum(worst, res)
        ok &= (res <= rel_tol) & (np.abs(z) >= sys.budget.R2) & (np.abs(fz) >= sys.budget.R2)
    return ok, minmod, worst
