"""Built-in pole families and the custom CSV loader."""
from __future__ import annotations

import csv
import math
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from ..errors import BadParameter
from .model import PoleField
from .tails import GammaTail, LatticeTail, LogPoleTail, TailModel, lattice_index

LATTICE_RADIUS = 200.0
LOG_POLES_FIRST, LOG_POLES_LAST = 8, 500
GAMMA_LAST = 150
# largest |Gamma| over its real critical points, attained near x = -0.504
GAMMA_CRITICAL_MAX = 3.5446436111550050

_BLOCK = 1000


def _corner_sum_upper(n, s):
    """Upper bound for sum_{j,k >= n} (j^2 + k^2)^(-s/2), s > 2."""
    j = np.arange(n, n + _BLOCK, dtype=float)
    head = float(np.sum((j[:, None] ** 2 + j[None, :] ** 2) ** (-s / 2)))
    big = n + _BLOCK
    # sum_{k>=n} (j^2+k^2)^(-s/2) <= j^-s + c_s j^(1-s)
    c_s = math.sqrt(math.pi) * math.exp(math.lgamma((s - 1) / 2) - math.lgamma(s / 2)) / 2
    sum_js = big ** -s + big ** (1 - s) / (s - 1)
    sum_j1s = big ** (1 - s) + big ** (2 - s) / (s - 2)
    return head + 2 * (sum_js + c_s * sum_j1s)


@lru_cache(maxsize=None)
def lattice_start_index(alpha, M, exp_coeffs=False):
    """Least N >= 1 with sum_{|j|,|k|>=N} |j+ik|^(-alpha M) <= 2^-(M+1).

    For exponential coefficients N is also large enough that
    exp(-r) <= r^-alpha for every r >= N sqrt(2).
    """
    s = alpha * M
    if s <= 2:
        raise BadParameter("lattice families need alpha*M > 2")
    n = 1
    while True:
        ok = 4 * _corner_sum_upper(n, s) <= 2.0 ** -(M + 1)
        if ok and exp_coeffs:
            r = max(n * math.sqrt(2), alpha)
            ok = alpha * math.log(r) - r <= 0 and n * math.sqrt(2) >= alpha
        if ok:
            return n
        n += 1


def _lattice(tag, alpha, M, radius, exp_coeffs):
    n = lattice_start_index(alpha, M, exp_coeffs)
    r = int(math.floor(radius))
    p = np.arange(-r, r + 1)
    p = p[np.abs(p) >= n]
    P, Q = np.meshgrid(p, p, indexing="ij")
    a = (P + 1j * Q).ravel()
    keep = np.abs(a) <= radius
    a = a[keep]
    P, Q = P.ravel()[keep], Q.ravel()[keep]
    mod = np.abs(a)
    b = np.exp(-mod) if exp_coeffs else mod ** (-alpha)
    order = np.lexsort((a.imag, a.real, mod))
    a, b, P, Q = a[order], b[order], P[order], Q[order]
    idx = np.array([lattice_index(int(x), int(y)) for x, y in zip(P, Q)], dtype=np.int64)
    far = LatticeTail(n, M, "exp" if exp_coeffs else "power", alpha, radius)
    if exp_coeffs:
        wt = TailModel("exponential", rate=1.0, base_mu=M, directions="isotropic")
        params = {"M": M, "start": n}
    else:
        wt = TailModel("power_law", exponent=alpha + 1 + 1.0 / M, base_mu=M,
                       directions="isotropic")
        params = {"alpha": alpha, "M": M, "start": n}
    return PoleField(a, b, np.full(a.size, M), idx,
                     weight_tails={M: wt},
                     order_tail=TailModel("power_law", exponent=1.0, directions="isotropic"),
                     max_mult=M, mu=M, family_tag=tag, params=params, far=far,
                     singular_bound=2.0, truncation=radius)


def lattice_power(alpha=3.0, M=1, radius=LATTICE_RADIUS):
    alpha, M = float(alpha), int(M)
    if M < 1:
        raise BadParameter("M must be a positive integer")
    if not alpha > 2.0 / M:
        raise BadParameter(f"lattice_power needs alpha > 2/M, got alpha={alpha}, M={M}")
    return _lattice("lattice_power", alpha, M, float(radius), False)


def lattice_exp(M=1, radius=LATTICE_RADIUS):
    M = int(M)
    if M < 1:
        raise BadParameter("M must be a positive integer")
    # exp(-r) <= r^-alpha eventually for any alpha; use alpha = 2/M + 1
    return _lattice("lattice_exp", 2.0 / M + 1.0, M, float(radius), True)


def log_poles(last=LOG_POLES_LAST):
    j = np.arange(LOG_POLES_FIRST, int(last) + 1)
    a = np.log(j.astype(float)).astype(complex)
    b = np.exp(-j.astype(float))
    return PoleField(a, b, np.ones(j.size, dtype=np.int32), j,
                     weight_tails={1: TailModel("exponential", rate=1.0, directions=(0.0,))},
                     order_tail=TailModel("divergent", directions=(0.0,)),
                     max_mult=1, mu=1, family_tag="log_poles", params={},
                     far=LogPoleTail(last), singular_bound=2.0,
                     truncation=float(last))


def gamma_poles(shift=0.0, last=GAMMA_LAST):
    shift = complex(shift)
    j = np.arange(1, int(last) + 1)
    a = -j - shift
    if np.any(np.abs(a) < 1e-12):
        raise BadParameter("the shift puts a pole at the origin")
    b = np.where(j % 2 == 0, 1.0, -1.0) * np.exp(-gammaln(j + 1.0))
    return PoleField(a, b, np.ones(j.size, dtype=np.int32), j,
                     weight_tails={1: TailModel("factorial", directions=(math.pi,))},
                     order_tail=TailModel("power_law_line", exponent=1.0, directions=(math.pi,)),
                     max_mult=1, mu=1, family_tag="gamma",
                     params={"a": shift if shift.imag else shift.real},
                     far=GammaTail(last, shift), singular_bound=GAMMA_CRITICAL_MAX,
                     truncation=float(last))


def single_pole(a=0.0, b=1.0, m=1):
    """A one-term rational field (b/(z-a))^m, used in checks and examples."""
    return PoleField([a], [b], [m], [0], family_tag="custom")


def custom(locations, coeffs, mults, indices=None, tail=None, order_tail=None,
           max_mult=None, mu=None, singular_bound=None, tail_sup=None):
    """Field from explicit data. ``tail`` is a TailModel or a dict of them
    keyed by multiplicity; without one the field is finite.
    """
    mults = np.asarray(mults, dtype=np.int32)
    if isinstance(tail, TailModel):
        m = int(max_mult if max_mult is not None else mults.max())
        tail = {m: tail}
    return PoleField(locations, coeffs, mults, indices, weight_tails=tail,
                     order_tail=order_tail, max_mult=max_mult, mu=mu,
                     family_tag="custom", params={}, singular_bound=singular_bound,
                     tail_sup=tail_sup)


CSV_HEADER = ["index", "re_a", "im_a", "re_b", "im_b", "mult"]


def read_pole_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != CSV_HEADER:
        raise BadParameter(f"{path}: header must be {','.join(CSV_HEADER)}")
    data = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    try:
        idx = np.array([int(r[0]) for r in data], dtype=np.int64)
        a = np.array([complex(float(r[1]), float(r[2])) for r in data])
        b = np.array([complex(float(r[3]), float(r[4])) for r in data])
        m = np.array([int(r[5]) for r in data], dtype=np.int32)
    except (ValueError, IndexError) as exc:
        raise BadParameter(f"{path}: malformed row ({exc})") from None
    return idx, a, b, m


def write_pole_csv(path, field):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for p in field.poles():
            w.writerow([p.index, repr(p.location.real), repr(p.location.imag),
                        repr(p.coeff.real), repr(p.coeff.imag), p.multiplicity])


def make_family(tag, params=None):
    params = dict(params or {})
    try:
        if tag == "lattice_power":
            return lattice_power(params.get("alpha", 3.0), params.get("M", 1),
                                 params.get("radius", LATTICE_RADIUS))
        if tag == "lattice_exp":
            return lattice_exp(params.get("M", 1), params.get("radius", LATTICE_RADIUS))
        if tag == "log_poles":
            return log_poles(params.get("last", LOG_POLES_LAST))
        if tag == "gamma":
            return gamma_poles(params.get("a", 0.0), params.get("last", GAMMA_LAST))
        if tag == "custom":
            if "csv" in params:
                idx, a, b, m = read_pole_csv(params["csv"])
            else:
                idx = params.get("indices")
                a, b, m = params["locations"], params["coeffs"], params["mults"]
            tail = params.get("tail")
            if isinstance(tail, dict) and "kind" in tail:
                tail = TailModel.from_dict(tail)
            elif isinstance(tail, dict):
                tail = {int(k): (v if isinstance(v, TailModel) else TailModel.from_dict(v))
                        for k, v in tail.items()}
            ot = params.get("order_tail")
            if isinstance(ot, dict):
                ot = TailModel.from_dict(ot)
            return custom(a, b, m, idx, tail=tail, order_tail=ot,
                          max_mult=params.get("max_mult"), mu=params.get("mu"),
                          singular_bound=params.get("singular_bound"),
                          tail_sup=params.get("tail_sup"))
    except KeyError as exc:
        raise BadParameter(f"missing family parameter {exc}") from None
    raise BadParameter(f"unknown family {tag!r}")
