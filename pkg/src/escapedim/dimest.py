"""Upper bounds from cover sums, orbit sampling, rendering, box counting and
the combined dimension bracket."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .critexp import DimensionEstimate, field_critical_exponent
from .errors import (BadParameter, DegenerateSample, EscapeDimError, NoMaxPolesInAnyCone,
                     PoleHit, RadiusTooSmall, TailUnbounded)
from .polefield.evaluation import evaluate, series
from .polefield.inverse import KOEBE_K, base_radius

DEFAULT_LADDER = (1e3, 1e4, 1e5, 1e6, 1e9, 1e12, 1e20, 1e50, 1e100)
DEFAULT_HORIZON = 50
NEVER = -1


def default_constant(M, K=KOEBE_K):
    return 2.0 * K * M


# ---------------------------------------------------------------------------
# cover sums
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverLevel:
    R: float
    level: int
    t: float
    per_level_factor: float
    prefactor: float
    sum_bound: float
    C: float
    K: float
    log_factor: float = 0.0
    log_sum_bound: float = 0.0  # kept in logs, deep levels underflow

    def to_dict(self):
        return dict(R=self.R, level=self.level, t=self.t, per_level_factor=self.per_level_factor,
                    prefactor=self.prefactor, sum_bound=self.sum_bound, C=self.C, K=self.K,
                    log_factor=self.log_factor, log_sum_bound=self.log_sum_bound)


def _log_pole_sum(f, R, t, K):
    """log of sum w_j^t over poles whose neighbourhood U_j(R) avoids the
    closed disk of radius R (explicit head plus the far-field bound)."""
    M = f.max_mult
    a = np.abs(f.locations)
    reach = K * np.abs(f.coeffs) * R ** (-1.0 / f.mults)
    keep = (a - reach > R) & (a > 0)
    w = np.abs(f.coeffs[keep]) / a[keep] ** (1 + 1.0 / M)
    parts = []
    if w.size:
        lw = t * np.log(w)
        top = float(lw.max())
        parts.append(top + math.log(float(np.exp(lw - top).sum())))
    if not f.finite:
        if f.far is None or not hasattr(f.far, "weight_tail_log_upper"):
            raise TailUnbounded("the tail model gives no bound for the cover sum")
        rmin = R * (1 + 1e-12) + K
        parts.append(float(f.far.weight_tail_log_upper(rmin, t, M)))
    if not parts:
        return -math.inf
    top = max(parts)
    if not np.isfinite(top):
        return top
    return top + math.log(sum(math.exp(p - top) for p in parts))


def cover_sum(f, R, t, level, C=None, K=KOEBE_K):
    """Bound K^t R^(-t/M) [C M sum_j w_j^t]^level for the cover of the
    points that stay beyond R for ``level`` steps."""
    if level < 1:
        raise BadParameter("level must be at least 1")
    if not t > 0:
        raise BadParameter("t must be positive")
    M = f.max_mult
    thr = 2.0 ** M * base_radius(f)
    if R < thr:
        raise RadiusTooSmall(f"R={R:g} is below the threshold 2^M R0 = {thr:g}")
    C = default_constant(M, K) if C is None else float(C)
    log_factor = math.log(C * M) + _log_pole_sum(f, R, t, K)
    log_pre = t * math.log(K) - t / M * math.log(R)
    factor = math.exp(min(log_factor, 700.0))
    total = log_pre + level * log_factor
    return CoverLevel(float(R), int(level), float(t), factor, math.exp(log_pre),
                      math.exp(min(total, 700.0)), C, float(K), log_factor, total)


def upper_dimension_estimate(f, R, tol=1e-3, C=None, K=KOEBE_K, t_max=2.0):
    """Smallest t with per-level factor < 1 at radius R, by bisection."""
    if not tol > 0:
        raise BadParameter("tol must be positive")
    C = default_constant(f.max_mult, K) if C is None else float(C)

    def below(t):
        return cover_sum(f, R, t, 1, C, K).per_level_factor < 1

    lo, hi = 0.0, float(t_max)
    notes = []
    if not below(hi):
        notes.append(f"per-level factor >= 1 up to t = {t_max:g}")
        return DimensionEstimate(hi, hi, "cover_upper", tol, notes=tuple(notes),
                                 meta={"R": R, "C": C, "K": K})
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if below(mid):
            hi = mid
        else:
            lo = mid
    return DimensionEstimate(lo, hi, "cover_upper", tol, meta={"R": R, "C": C, "K": K})


def radius_ladder(f, radii=DEFAULT_LADDER, tol=1e-3, C=None, K=KOEBE_K):
    """(R, estimate) along the ladder; radii below the threshold are skipped."""
    out = []
    for R in radii:
        try:
            out.append((float(R), upper_dimension_estimate(f, R, tol, C, K)))
        except RadiusTooSmall:
            continue
    if not out:
        raise RadiusTooSmall("every radius of the ladder is below the threshold")
    return out


def ladder_monotone(ladder, slack=0.0):
    his = [e.hi for _, e in ladder]
    return all(b <= a + slack for a, b in zip(his, his[1:]))


# ---------------------------------------------------------------------------
# orbits and rendering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrbitRecord:
    seed: complex
    modulus_track: Tuple[float, ...]
    classification: str
    horizon: int
    pole_hit_step: Optional[int] = None

    @property
    def escaping(self):
        return self.classification in ("escaping_candidate", "pole_hit")


def _classify(track, R, horizon):
    tail = track[-math.ceil(horizon / 2):]
    if len(track) < horizon:
        return "undecided"
    if min(tail) >= R:
        return "escaping_candidate"
    if max(tail) < R:
        return "bounded"
    return "undecided"


def escape_orbit_sample(f, z0, R, horizon=DEFAULT_HORIZON):
    """Iterate f from z0 and classify by the minimum modulus over the last
    ceil(horizon/2) iterates. Landing on a pole counts as escaping (flagged)."""
    if horizon < 1:
        raise BadParameter("horizon must be at least 1")
    z = complex(z0)
    track = []
    for n in range(horizon):
        try:
            z = evaluate(f, z)
        except PoleHit:
            return OrbitRecord(complex(z0), tuple(track), "pole_hit", horizon, n)
        if not np.isfinite(z):
            return OrbitRecord(complex(z0), tuple(track), "pole_hit", horizon, n)
        track.append(abs(z))
    return OrbitRecord(complex(z0), tuple(track), _classify(track, R, horizon), horizon)


def certified_orbits(sys, state, horizon=20, rel_tol=1e-8):
    """OrbitRecords for pullback-constructed seeds.

    Forward iteration of such seeds in plain double precision is meaningless
    (their offsets from the poles are far below the spacing of doubles), so
    the orbit is the recorded pullback chain, each step checked by a forward
    evaluation in local coordinates.
    """
    from .conjugacy import forward_certificate
    from .polefield.evaluation import resolve

    ok, _, worst = forward_certificate(sys, state, horizon, rel_tol)
    orbit = [np.abs(resolve(sys.field, p)[0] + d) for p, d in state.chain]
    orbit.append(np.abs(state.origin))
    orbit = np.array(orbit)
    out = []
    for i in range(state.w.size):
        p0, d0 = state.chain[0][0][i], state.chain[0][1][i]
        z0 = complex(resolve(sys.field, [p0])[0][0] + d0)
        track = tuple(float(x) for x in orbit[1:horizon + 1, i])
        good = ok[i] and len(track) >= horizon and min(track) >= sys.budget.R2
        out.append(OrbitRecord(z0, track, "escaping_candidate" if good else "undecided", horizon))
    return out, worst


def render_escape_map(f, window, grid, R, horizon=DEFAULT_HORIZON):
    """First step at which |f^n(z)| > R per pixel (NEVER if it does not
    happen within the horizon); row-major, top row at the window's max y.
    Landing on a pole counts as an exit at that step."""
    x0, x1, y0, y1 = (float(v) for v in window)
    nx, ny = (int(v) for v in grid)
    if nx < 1 or ny < 1:
        raise BadParameter("grid dimensions must be positive")
    if not (x1 > x0 and y1 > y0):
        raise BadParameter("window must have positive extent")
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y1 - (np.arange(ny) + 0.5) * (y1 - y0) / ny
    z = (xs[None, :] + 1j * ys[:, None]).ravel()
    out = np.full(z.size, NEVER, dtype=np.int32)
    live = np.ones(z.size, dtype=bool)
    eps = np.finfo(float).eps
    for n in range(1, horizon + 1):
        idx = np.flatnonzero(live)
        if not idx.size:
            break
        zz = z[idx]
        hit = np.zeros(idx.size, dtype=bool)
        if len(f):
            d, i = f.nearest(zz)
            hit = d <= 8 * eps * np.maximum(1.0, np.abs(f.locations[i]))
        with np.errstate(all="ignore"):
            w = series(f, np.where(hit, 0j, zz))[0]
        bad = hit | ~np.isfinite(w)
        exit_ = bad | (np.abs(w) > R)
        out[idx[exit_]] = n
        live[idx[exit_]] = False
        z[idx[~exit_]] = w[~exit_]
    return out.reshape(ny, nx)


def _palette(buf, horizon):
    b = np.asarray(buf)
    rgb = np.zeros(b.shape + (3,), dtype=np.uint8)
    esc = b != NEVER
    frac = np.where(esc, 1.0 - (b - 1) / max(1, horizon), 0.0)
    rgb[..., 0] = np.where(esc, 255 * frac, 0).astype(np.uint8)
    rgb[..., 1] = np.where(esc, 180 * frac ** 2, 0).astype(np.uint8)
    rgb[..., 2] = np.where(esc, 60 + 120 * (1 - frac), 0).astype(np.uint8)
    return rgb


def write_ppm(path, buf, horizon):
    rgb = _palette(buf, horizon)
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_png(path, buf, horizon):
    from PIL import Image
    Image.fromarray(_palette(buf, horizon), "RGB").save(path, format="PNG", optimize=False)


# ---------------------------------------------------------------------------
# box counting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxCount:
    slope: float
    residual: float
    scales: Tuple[float, ...]
    counts: Tuple[int, ...]


def box_count_dimension(points, scales: Optional[Sequence[float]] = None):
    """Least-squares slope of log N(eps) against log(1/eps)."""
    p = np.asarray(points)
    if np.iscomplexobj(p) or p.ndim == 1:
        p = np.column_stack([np.real(p).ravel(), np.imag(p).ravel()])
    if p.shape[0] < 100:
        raise DegenerateSample("box counting needs at least 100 points")
    if not np.all(np.isfinite(p)):
        raise DegenerateSample("non-finite points")
    span = float(np.max(p.max(axis=0) - p.min(axis=0)))
    if scales is None:
        base = span if span > 0 else 1.0
        scales = base * np.geomspace(2.0 ** -2, 2.0 ** -8, 7)
    scales = np.asarray(scales, dtype=float)
    if scales.size < 4 or np.any(scales <= 0):
        raise DegenerateSample("need at least 4 positive scales")
    origin = p.min(axis=0)
    counts = []
    for eps in scales:
        cells = np.floor((p - origin) / eps).astype(np.int64)
        counts.append(int(np.unique(cells, axis=0).shape[0]))
    x = np.log(1.0 / scales)
    y = np.log(np.asarray(counts, dtype=float))
    slope, icpt = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - slope * x - icpt) ** 2)))
    return BoxCount(float(slope), res, tuple(scales.tolist()), tuple(counts))


# ---------------------------------------------------------------------------
# bracket
# ---------------------------------------------------------------------------

def lower_dimension_estimate(f, tol=1e-3, K=KOEBE_K, depth=64, t_max=2.0):
    """Bowen lower bound from the conjugated IFS, or the trivial bound 0 when
    the field offers no pool of maps."""
    from . import conjugacy, nais

    try:
        sys = conjugacy.build_system(f, K)
        fam = conjugacy.conjugated_family(sys)
    except (NoMaxPolesInAnyCone, BadParameter) as exc:
        return DimensionEstimate(0.0, 0.0, "pressure_lower", tol,
                                 notes=(f"no IFS available ({exc}); trivial lower bound 0",))
    est = nais.bowen_dimension(fam, lambda t: nais.build_schedule(fam.pool, t, depth),
                               tol, depth, t_max)
    meta = dict(est.meta)
    meta["system"] = sys.to_dict()
    return DimensionEstimate(est.lo, est.hi, est.method, tol, notes=est.notes, meta=meta)


def dimension_bracket(f, config=None):
    """[Bowen lower bound, least cover upper bound along the radius ladder]."""
    from .config import RunConfig

    cfg = config if config is not None else RunConfig()
    K, tol = cfg.koebe_K, cfg.tol
    C = cfg.constant_C
    lower = lower_dimension_estimate(f, tol, K, cfg.depth)
    ladder = radius_ladder(f, cfg.radius_ladder, tol, C, K)
    best = min(ladder, key=lambda x: x[1].hi)
    upper = best[1].hi
    delta = field_critical_exponent(f, tol)
    lo = min(lower.lo, upper)
    notes = list(lower.notes)
    if lower.lo > upper:
        notes.append("lower estimate exceeds the upper one")
    monotone = ladder_monotone(ladder, tol)
    if not monotone:
        notes.append("upper estimates do not decrease along the radius ladder")
    contains = lo - tol <= delta.value <= upper + tol
    if not contains:
        notes.append(f"bracket does not contain the critical exponent {delta.value:.6g}")
    meta = {
        "lower": {"value": lower.lo, "method": lower.method, "notes": list(lower.notes)},
        "upper": {"value": upper, "R": best[0], "C": best[1].meta["C"], "K": K},
        "ladder": [[R, e.hi] for R, e in ladder],
        "ladder_monotone": monotone,
        "delta": delta.value,
        "contains_delta": contains,
    }
    return DimensionEstimate(lo, upper, "cover_upper", tol, notes=tuple(notes), meta=meta)
