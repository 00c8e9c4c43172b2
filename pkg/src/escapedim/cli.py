"""Command-line interface: ``escapedim <command> [options]``.

Exit codes: 0 success, 1 acceptance failure, 2 usage error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .config import RunConfig, dumps
from .errors import BadParameter, EscapeDimError, NoSingularBound, RadiusTooSmall

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
FAMILIES = ("lattice_power", "lattice_exp", "log_poles", "gamma", "custom")


def _parse_value(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        return text


def _common(p):
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--alpha", type=float, help="lattice_power exponent")
    p.add_argument("--max-mult", type=int, dest="max_mult",
                   help="lattice multiplicity M, or the cap M of the restricted exponent")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="extra family parameter (repeatable)")
    p.add_argument("--csv", help="pole CSV for the custom family")
    p.add_argument("--radius-ladder", dest="radius_ladder",
                   help="comma-separated radii for the cover-sum ladder")
    p.add_argument("--tol", type=float)
    p.add_argument("--constant-C", type=float, dest="constant_C")
    p.add_argument("--koebe-K", type=float, dest="koebe_K")
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="escapedim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"escapedim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("delta", help="critical exponent of the pole-weight series")
    _common(p)
    p.add_argument("--trace", help="CSV file for the bisection trace")

    p = sub.add_parser("order", help="order of the function and the 2M rho/(2+M rho) bound")
    _common(p)

    p = sub.add_parser("pressure", help="lower-pressure curves of the conjugated IFS")
    _common(p)
    p.add_argument("--t-grid", dest="t_grid", help="comma-separated exponents")
    p.add_argument("--depth", type=int)

    p = sub.add_parser("bracket", help="lower/upper dimension bracket")
    _common(p)
    p.add_argument("--depth", type=int)

    p = sub.add_parser("render", help="escape-time image")
    _common(p)
    p.add_argument("--window", help="xmin,xmax,ymin,ymax")
    p.add_argument("--grid", help="nx,ny")
    p.add_argument("--format", choices=("ppm", "png"), dest="image_format")
    p.add_argument("--escape-radius", type=float, default=None)

    p = sub.add_parser("verify", help="run the self-verification suite")
    _common(p)
    p.add_argument("--samples", type=int)
    return parser


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def config_from_args(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    d = cfg.to_dict()
    if args.family and args.family != cfg.family:
        d["family"] = args.family
        d["params"] = {}
    if args.alpha is not None:
        d["params"]["alpha"] = args.alpha
    for item in args.param:
        if "=" not in item:
            raise BadParameter(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        d["params"][k.strip()] = _parse_value(v.strip())
    if args.csv:
        d["params"]["csv"] = args.csv
    for key in ("max_mult", "tol", "constant_C", "koebe_K", "horizon", "seed", "out",
                "depth", "samples", "image_format"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    for key in ("radius_ladder", "t_grid", "window"):
        v = getattr(args, key, None)
        if v:
            d[key] = _floats(v)
    if getattr(args, "grid", None):
        d["grid"] = tuple(int(x) for x in args.grid.split(","))
    if d["family"] in ("lattice_power", "lattice_exp") and d.get("max_mult") is not None:
        d["params"]["M"] = d["max_mult"]
    return RunConfig.from_dict(d)


def _emit(cfg, name, doc, out_stream):
    text = dumps(doc)
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, name), "w") as fh:
            fh.write(text)
    out_stream.write(text)


def cmd_delta(cfg, args, out):
    from .critexp import field_critical_exponent, restricted_critical_exponent

    f = cfg.build_field()
    restrict = cfg.max_mult if cfg.family not in ("lattice_power", "lattice_exp") else None
    if restrict is not None:
        est = restricted_critical_exponent(f, restrict, cfg.tol, trace=args.trace)
    else:
        est = field_critical_exponent(f, cfg.tol, trace=args.trace)
    doc = cfg.stamp({"command": "delta", "field": f.describe(), "max_mult_cap": restrict,
                     "estimate": est.to_dict()})
    _emit(cfg, "delta.json", doc, out)
    return EXIT_OK


def cmd_order(cfg, args, out):
    from .critexp import bk_upper_bound, order_of_function

    f = cfg.build_field()
    rho = order_of_function(f, cfg.tol)
    doc = cfg.stamp({"command": "order", "field": f.describe(), "order": rho.to_dict(),
                     "bk_bound": bk_upper_bound(f.max_mult, rho.rho)})
    _emit(cfg, "order.json", doc, out)
    return EXIT_OK


def cmd_pressure(cfg, args, out):
    import io

    from . import conjugacy, nais
    from .errors import PoolExhausted

    f = cfg.build_field()
    sys_ = conjugacy.build_system(f, cfg.koebe_K)
    fam = conjugacy.conjugated_family(sys_)
    curves, missing = [], []
    for t in cfg.t_grid:
        try:
            sched = nais.build_schedule(fam.pool, t, cfg.depth)
        except PoolExhausted:
            missing.append(t)
            continue
        curves.append(nais.lower_pressure(fam, sched, t, cfg.depth))
    buf = io.StringIO()
    nais.write_pressure_csv(buf, curves)
    text = f"# escapedim {__version__} config {cfg.hash()}\n" + buf.getvalue()
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "pressure.csv"), "w") as fh:
            fh.write(text)
    out.write(text)
    for t in missing:
        sys.stderr.write(f"t={t}: no schedule (pool exhausted)\n")
    return EXIT_OK


def cmd_bracket(cfg, args, out):
    from .dimest import dimension_bracket
    from .verify import delta_target

    f = cfg.build_field()
    est = dimension_bracket(f, cfg)
    target = delta_target(f)
    doc = cfg.stamp({"family": f.family_tag, "delta_closed": target,
                     "bracket_lo": est.lo, "bracket_hi": est.hi,
                     "method_meta": {"notes": list(est.notes), **est.meta}})
    _emit(cfg, "bracket.json", doc, out)
    if cfg.out:
        with open(os.path.join(cfg.out, "ladder.csv"), "w") as fh:
            fh.write("R,t_upper\n")
            for R, t in est.meta["ladder"]:
                fh.write(f"{R!r},{t!r}\n")
    return EXIT_OK if est.meta["contains_delta"] or target is None else EXIT_FAIL


def _default_window(f):
    if len(f):
        p = f.pole(int(f.indices[len(f) // 2]))
        c, h = p.location, 0.5
        return (c.real - h, c.real + h, c.imag - h, c.imag + h)
    return (-4.0, 4.0, -4.0, 4.0)


def cmd_render(cfg, args, out):
    from .dimest import render_escape_map, write_png, write_ppm
    from .polefield.inverse import base_radius

    f = cfg.build_field()
    window = cfg.window or _default_window(f)
    R = args.escape_radius or 2.0 ** f.max_mult * base_radius(f)
    buf = render_escape_map(f, window, cfg.grid, R, cfg.horizon)
    outdir = cfg.out or "."
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"escape.{cfg.image_format}")
    (write_png if cfg.image_format == "png" else write_ppm)(path, buf, cfg.horizon)
    doc = cfg.stamp({"command": "render", "image": os.path.basename(path), "window": list(window),
                     "grid": list(cfg.grid), "R": R, "horizon": cfg.horizon,
                     "escaped_pixels": int((buf >= 0).sum())})
    _emit(cfg, "render.json", doc, out)
    return EXIT_OK


def cmd_verify(cfg, args, out):
    from . import verify

    report, checks, passed = verify.run(cfg)
    for c in checks:
        sys.stderr.write(c.line() + "\n")
    _emit(cfg, "verify.json", report, out)
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {"delta": cmd_delta, "order": cmd_order, "pressure": cmd_pressure,
            "bracket": cmd_bracket, "render": cmd_render, "verify": cmd_verify}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args, out)
    except (BadParameter, NoSingularBound, RadiusTooSmall, FileNotFoundError) as exc:
        sys.stderr.write(f"escapedim: error: {exc}\n")
        return EXIT_USAGE
    except EscapeDimError as exc:
        sys.stderr.write(f"escapedim: numeric failure: {type(exc).__name__}: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
