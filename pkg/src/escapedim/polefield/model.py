"""Pole data containers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..errors import BadParameter, UnknownPole
from .tails import Decision, TailModel


@dataclass(frozen=True)
class PoleDatum:
    index: int
    location: complex
    coeff: complex
    multiplicity: int

    def __post_init__(self):
        if int(self.multiplicity) < 1:
            raise BadParameter("pole multiplicity must be at least 1")
        if self.coeff == 0:
            raise BadParameter("pole coefficient must be nonzero")


@dataclass(frozen=True)
class LocalModel:
    """Near a_j, f = 1/psi^m with psi(a_j) = 0 and psi'(a_j) = 1/b_j."""

    pole: PoleDatum
    psi_deriv_at_pole: complex
    domain_radius: float

    @classmethod
    def of(cls, pole, domain_radius):
        return cls(pole, 1.0 / complex(pole.coeff), float(domain_radius))


@dataclass(frozen=True)
class DiskBracket:
    center: complex
    inner_radius: float
    outer_radius: float
    kappa: float

    def __post_init__(self):
        if not 0 < self.inner_radius <= self.outer_radius:
            raise BadParameter("disk bracket needs 0 < inner <= outer")

    def contains(self, z, which="outer"):
        r = self.outer_radius if which == "outer" else self.inner_radius
        return abs(z - self.center) <= r


FAMILY_TAGS = ("lattice_power", "lattice_exp", "log_poles", "gamma", "custom")


class PoleField:
    """A meromorphic function given by its poles.

    Explicit poles are held in parallel arrays. ``far`` optionally generates
    and bounds the poles beyond the explicit head (see ``tails``).
    ``weight_tails`` maps each multiplicity class with infinitely many poles
    to the :class:`TailModel` of its weight series; ``order_tail`` describes
    sum |a_j|^-t.
    """

    def __init__(self, locations, coeffs, mults, indices=None, *,
                 weight_tails: Optional[Dict[int, TailModel]] = None,
                 order_tail: Optional[TailModel] = None,
                 max_mult=None, mu=None, family_tag="custom", params=None,
                 far=None, singular_bound=None, tail_sup=None, truncation=None):
        loc = np.ascontiguousarray(locations, dtype=np.complex128)
        cf = np.ascontiguousarray(coeffs, dtype=np.complex128)
        ml = np.ascontiguousarray(mults, dtype=np.int32)
        if indices is None:
            indices = np.arange(loc.size, dtype=np.int64)
        idx = np.ascontiguousarray(indices, dtype=np.int64)
        if not (loc.shape == cf.shape == ml.shape == idx.shape) or loc.ndim != 1:
            raise BadParameter("pole arrays must be one-dimensional and of equal length")
        if family_tag not in FAMILY_TAGS:
            raise BadParameter(f"unknown family tag {family_tag!r}")
        if np.any(ml < 1):
            raise BadParameter("multiplicities must be positive")
        if np.any(cf == 0):
            raise BadParameter("coefficients must be nonzero")
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(cf))):
            raise BadParameter("pole data must be finite")
        if np.unique(loc).size != loc.size:
            raise BadParameter("pole locations must be pairwise distinct")
        if np.unique(idx).size != idx.size:
            raise BadParameter("pole indices must be distinct")

        weight_tails = dict(weight_tails or {})
        self.finite = not weight_tails and far is None
        observed = int(ml.max()) if ml.size else 1
        declared = [int(k) for k in weight_tails]
        if max_mult is None:
            max_mult = max([observed] + declared)
        max_mult = int(max_mult)
        if max_mult < observed:
            raise BadParameter("explicit multiplicity exceeds max_mult")
        if mu is None:
            mu = max_mult
        mu = int(mu)
        if not 1 <= mu <= max_mult:
            raise BadParameter("mu must satisfy 1 <= mu <= max_mult")

        for arr in (loc, cf, ml, idx):
            arr.flags.writeable = False
        self.locations, self.coeffs, self.mults, self.indices = loc, cf, ml, idx
        self.weight_tails = weight_tails
        self.order_tail = order_tail if order_tail is not None else TailModel("none")
        self.max_mult = max_mult
        self.mu = mu
        self.family_tag = family_tag
        self.params = dict(params or {})
        self.far = far
        self.singular_bound = singular_bound
        self.tail_sup = tail_sup
        self.truncation = truncation
        self._positions = None
        self._tree = None
        self._cache = {}

    # -- lookup ------------------------------------------------------------
    def __len__(self):
        return int(self.locations.size)

    @property
    def head_radius(self):
        return float(np.abs(self.locations).max()) if len(self) else 0.0

    @property
    def max_mult_attained(self):
        """True when some explicit pole has multiplicity ``max_mult``."""
        return bool(len(self)) and int(self.mults.max()) == self.max_mult

    def position(self, index):
        if self._positions is None:
            self._positions = {int(k): i for i, k in enumerate(self.indices)}
        return self._positions.get(int(index))

    def pole(self, index) -> PoleDatum:
        pos = self.position(index)
        if pos is not None:
            return PoleDatum(int(index), complex(self.locations[pos]),
                             complex(self.coeffs[pos]), int(self.mults[pos]))
        if self.far is not None and hasattr(self.far, "datum"):
            d = self.far.datum(int(index))
            if d is not None:
                return PoleDatum(int(index), *d)
        raise UnknownPole(index)

    def poles(self):
        for i in range(len(self)):
            yield PoleDatum(int(self.indices[i]), complex(self.locations[i]),
                            complex(self.coeffs[i]), int(self.mults[i]))

    def nearest(self, z):
        """(distance, position) of the explicit pole nearest to each z."""
        from scipy.spatial import cKDTree
        if self._tree is None:
            self._tree = cKDTree(np.column_stack([self.locations.real, self.locations.imag]))
        z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
        d, i = self._tree.query(np.column_stack([z.real, z.imag]))
        return d, i

    def local_model(self, index, R0):
        p = self.pole(index)
        return LocalModel.of(p, abs(p.coeff) / float(R0) ** (1.0 / p.multiplicity))

    # -- series data ---------------------------------------------------------
    def weights(self, mu=None, cap=None):
        """Head weights |b|/|a|^(1+1/mu) over nonzero locations, optionally
        restricted to multiplicities <= cap; returned with their multiplicities.
        """
        mu = self.mu if mu is None else int(mu)
        keep = self.locations != 0
        if cap is not None:
            keep &= self.mults <= cap
        a = np.abs(self.locations[keep])
        w = np.abs(self.coeffs[keep]) / a ** (1.0 + 1.0 / mu)
        return w, self.mults[keep]

    def tail_classes(self, cap=None):
        return {m: t for m, t in self.weight_tails.items() if cap is None or m <= cap}

    def has_infinite_class(self, mult):
        t = self.weight_tails.get(int(mult))
        return t is not None and t.kind != "none"

    def describe(self):
        d = {
            "family": self.family_tag,
            "params": {k: (v if not isinstance(v, complex) else [v.real, v.imag])
                       for k, v in self.params.items()},
            "explicit_poles": len(self),
            "max_mult": self.max_mult,
            "mu": self.mu,
            "finite": self.finite,
            "weight_tails": {str(k): v.to_dict() for k, v in self.weight_tails.items()},
            "order_tail": self.order_tail.to_dict(),
        }
        if self.singular_bound is not None:
            d["singular_bound"] = self.singular_bound
        return d

    def __repr__(self):
        return (f"PoleField({self.family_tag}, explicit={len(self)}, "
                f"M={self.max_mult}, mu={self.mu})")


def order_decision(field_: PoleField, t):
    return Decision.CONVERGES if field_.finite else field_.order_tail.decide(t)


def index_array(indices):
    """Pole indices as an int64 array, or an object array of Python ints when
    some index does not fit (far lattice poles)."""
    try:
        return np.atleast_1d(np.asarray(indices, dtype=np.int64))
    except OverflowError:
        return np.atleast_1d(np.array([int(k) for k in np.ravel(np.asarray(indices, dtype=object))],
                                      dtype=object).reshape(np.shape(indices)))


def is_close_to_pole(z, a, tol=8.0):
    return abs(z - a) <= tol * np.finfo(float).eps * max(1.0, abs(a))


def root_of_unity(k, m):
    return complex(math.cos(2 * math.pi * k / m), math.sin(2 * math.pi * k / m))
