"""Inverse branches near poles, plus the neighbourhood checks built on them."""
from __future__ import annotations

import math

import numpy as np

from ..errors import (BadParameter, BranchCollision, NoConvergence, NoSingularBound,
                      RadiusTooSmall)
from .evaluation import local_eval, local_rest, resolve
from .model import DiskBracket

KOEBE_K = 12.0
MAX_ITER = 60
NEWTON_TOL = 1e-12

OK, NO_CONVERGENCE, COLLISION = 0, 1, 2


def base_radius(field, strict=False):
    """Smallest power of two R0 >= 4 with the singular values in |w| <= R0/2."""
    bound = field.singular_bound
    if bound is None:
        if strict:
            raise NoSingularBound("field has no declared singular-value bound")
        bound = 0.0
    r0 = 4.0
    while bound > r0 / 2:
        r0 *= 2
    return r0


def kappa(M, K, R0, R):
    denom = 1.0 - 2.0 ** M * K * K * R0 / R ** (1.0 / M)
    if denom <= 0:
        return 2.0
    return min(2.0, 1.0 / denom)


def pole_neighborhood(field, index, R, K=KOEBE_K):
    if K < 1:
        raise BadParameter("K must be at least 1")
    R0 = base_radius(field)
    M = field.max_mult
    if R < 2.0 ** M * R0:
        raise RadiusTooSmall(f"R={R} is below the threshold 2^M R0 = {2.0 ** M * R0}")
    p = field.pole(index)
    scale = abs(p.coeff) / R ** (1.0 / p.multiplicity)
    return DiskBracket(p.location, scale / K, K * scale, kappa(M, K, R0, R))


def _principal_root(w, m):
    return np.exp(np.log(w) / m)


def solve_offsets(field, indices, w, branch, resolved=None, tol=NEWTON_TOL,
                  max_iter=MAX_ITER, inv_root=None):
    """Vectorised inverse branches in local coordinates.

    Returns ``(delta, status, iterations)`` where z = a_j + delta solves
    f(z) = w. Newton runs on the offset; the smooth part of the series is
    refreshed from a full evaluation after each inner solve, the singular part
    is exact. Steps that increase the residual are halved. ``inv_root``
    overrides the principal value of w^(-1/m) used for the seeds.
    """
    w = np.atleast_1d(np.asarray(w, dtype=np.complex128))
    branch = np.broadcast_to(np.asarray(branch, dtype=np.int64), w.shape)
    a, b, m, pos = resolved if resolved is not None else resolve(field, indices)
    a, b, m, pos = (np.ascontiguousarray(np.broadcast_to(x, w.shape)) for x in (a, b, m, pos))
    res = (a, b, m, pos)
    if inv_root is None:
        inv_root = 1.0 / _principal_root(w, m)
    seed = b * np.exp(2j * np.pi * branch / m) * inv_root
    delta = seed.copy()
    status = np.full(w.shape, NO_CONVERGENCE, dtype=np.int8)
    iters = np.zeros(w.shape, dtype=np.int32)
    scale = np.abs(w)
    active = np.ones(w.shape, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        sub = tuple(x[idx] for x in res)
        rest, drest = local_rest(field, sub, delta[idx])
        d0 = delta[idx]
        bb, mm, ww = sub[1], sub[2], w[idx]

        def model(d):
            r = 1.0 / d
            s = (bb * r) ** mm
            return s + rest + drest * (d - d0) - ww, drest - mm * s * r

        g, dg = model(d0)
        done = np.abs(g) <= tol * scale[idx]
        status[idx[done]] = OK
        d = d0.copy()
        live = ~done & (iters[idx] < max_iter)
        inner_tol = 0.05 * tol * scale[idx]
        while live.any():
            step = np.where(live, g / np.where(dg == 0, 1.0, dg), 0.0)
            cand = d - step
            gc, dgc = model(cand)
            for _ in range(30):
                worse = live & (~np.isfinite(gc) | (np.abs(gc) > np.abs(g)))
                if not worse.any():
                    break
                step = np.where(worse, step / 2, step)
                cand = np.where(worse, d - step, cand)
                gc, dgc = model(cand)
            d = np.where(live, cand, d)
            g = np.where(live, gc, g)
            dg = np.where(live, dgc, dg)
            iters[idx] += live
            live &= (np.abs(g) > inner_tol) & (iters[idx] < max_iter)
        moved = ~done
        delta[idx[moved]] = d[moved]
        active[idx[done]] = False
        active[idx[moved & (iters[idx] >= max_iter)]] = False
        stuck = moved & (np.abs(d - d0) <= 4 * np.finfo(float).eps * np.abs(d0))
        # refresh made no progress: accept the best available point
        active[idx[stuck]] = False
    sector = np.abs(np.angle(delta / seed)) > np.pi / (2 * m)
    status[(status == OK) & sector] = COLLISION
    return delta, status, iters


def _check_target(field, w):
    R0 = base_radius(field)
    if abs(w) < R0:
        raise RadiusTooSmall(f"|w|={abs(w):.6g} is below R0={R0}")


def inverse_branch_offset(field, index, w, branch=0):
    p = field.pole(index)
    if not 0 <= int(branch) < p.multiplicity:
        raise BadParameter(f"branch must lie in [0, {p.multiplicity})")
    _check_target(field, w)
    delta, status, _ = solve_offsets(field, [index], [w], [branch])
    if status[0] == NO_CONVERGENCE:
        raise NoConvergence(f"Newton did not converge for pole {index}, w={w}")
    if status[0] == COLLISION:
        raise BranchCollision(f"branch {branch} of pole {index} left its seed sector")
    return complex(delta[0])


def inverse_branch(field, index, w, branch=0):
    """The point z near pole ``index`` with f(z) = w on the given branch."""
    return field.pole(index).location + inverse_branch_offset(field, index, w, branch)


def inverse_branches(field, index, w):
    p = field.pole(index)
    _check_target(field, w)
    k = np.arange(p.multiplicity)
    delta, status, _ = solve_offsets(field, np.full(k.size, index), np.full(k.size, w), k)
    if np.any(status == NO_CONVERGENCE):
        raise NoConvergence(f"Newton did not converge for pole {index}, w={w}")
    if np.any(status == COLLISION):
        raise BranchCollision(f"branches of pole {index} collided at w={w}")
    return [p.location + complex(d) for d in delta]


def local_coeff_check(field, index, R_ref=None, K=KOEBE_K, n=16):
    """Relative deviation between the circle-fitted leading coefficient and
    the stored b_j^m_j."""
    p = field.pole(index)
    m = p.multiplicity
    if R_ref is None:
        R_ref = base_radius(field)
    eps = 1e-4 * abs(p.coeff) * R_ref ** (-1.0 / m) / K
    zeta = np.exp(2j * np.pi * np.arange(n) / n)
    delta = eps * zeta
    f, _ = local_eval(field, [index], delta)
    fit = np.mean(f * delta ** m)
    target = p.coeff ** m
    return float(abs(fit - target) / abs(target))


def derivative_comparison_stats(field, index, R, samples=32, K=KOEBE_K):
    """Extremes of |f'| |b| / |f|^(1+1/m) over points of the bracket annulus
    where |f| >= R."""
    if samples < 8:
        raise BadParameter("need at least 8 samples")
    br = pole_neighborhood(field, index, R, K)
    p = field.pole(index)
    m = p.multiplicity
    radii = np.geomspace(br.inner_radius / 16, br.outer_radius, 12)
    ang = 2 * np.pi * (np.arange(samples) + 0.5) / samples
    delta = (radii[:, None] * np.exp(1j * ang)[None, :]).ravel()
    f, df = local_eval(field, [index], delta)
    keep = np.abs(f) >= R
    ratio = np.abs(df[keep]) * abs(p.coeff) / np.abs(f[keep]) ** (1 + 1.0 / m)
    return float(ratio.min()), float(ratio.max())
