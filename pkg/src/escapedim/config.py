"""Run configuration (TOML), config hashing and output stamping."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .dimest import DEFAULT_HORIZON, DEFAULT_LADDER
from .errors import BadParameter
from .polefield.families import make_family
from .polefield.inverse import KOEBE_K


@dataclass
class RunConfig:
    family: str = "lattice_power"
    params: dict = field(default_factory=lambda: {"alpha": 3.0, "M": 1})
    max_mult: int | None = None
    koebe_K: float = KOEBE_K
    constant_C: float | None = None
    tol: float = 1e-3
    radius_ladder: tuple = DEFAULT_LADDER
    depth: int = 64
    horizon: int = DEFAULT_HORIZON
    seed: int = 0
    samples: int = 1000
    t_grid: tuple = (0.1, 0.2, 0.3, 0.35)
    window: tuple | None = None
    grid: tuple = (256, 256)
    image_format: str = "ppm"
    out: str | None = None

    def __post_init__(self):
        self.params = dict(self.params)
        self.radius_ladder = tuple(float(r) for r in self.radius_ladder)
        self.t_grid = tuple(float(t) for t in self.t_grid)
        self.grid = tuple(int(g) for g in self.grid)
        if self.window is not None:
            self.window = tuple(float(w) for w in self.window)
            if len(self.window) != 4:
                raise BadParameter("window is (xmin, xmax, ymin, ymax)")
        if len(self.grid) != 2:
            raise BadParameter("grid is (nx, ny)")
        if not self.tol > 0:
            raise BadParameter("tol must be positive")
        if self.koebe_K < 1:
            raise BadParameter("koebe_K must be at least 1")
        if self.constant_C is not None and not self.constant_C > 0:
            raise BadParameter("constant_C must be positive")
        if self.image_format not in ("ppm", "png"):
            raise BadParameter("image_format is ppm or png")
        if self.max_mult is not None and int(self.max_mult) < 1:
            raise BadParameter("max_mult must be a positive integer")

    def to_dict(self):
        d = asdict(self)
        for k in ("radius_ladder", "t_grid", "grid", "window"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise BadParameter(f"unknown config keys: {', '.join(sorted(extra))}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise BadParameter(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def dump(self, path):
        d = {k: v for k, v in self.to_dict().items() if v is not None}
        with open(path, "wb") as fh:
            tomli_w.dump(d, fh)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build_field(self):
        params = dict(self.params)
        if self.family in ("lattice_power", "lattice_exp") and self.max_mult is not None:
            params["M"] = int(self.max_mult)
        return make_family(self.family, params)

    def stamp(self, payload):
        """Attach version and config hash to an output document."""
        out = {"tool": "escapedim", "version": __version__, "config_hash": self.hash()}
        out.update(payload)
        return out


def dumps(doc):
    """Canonical JSON used for every output file."""
    return json.dumps(doc, sort_keys=True, indent=2, default=_default) + "\n"


def _default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not serialisable: {type(o).__name__}")
