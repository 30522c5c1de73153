"""Command-line entry point: ``elastorecon <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .experiments import (DEFAULT_K_GRID, REFERENCE_NX, SCENARIOS, ExperimentConfig, _jsonable, emit_csv,
                          forward_fields, ode_check, run_scenario, sweep_delta, sweep_h)
from .measurements import AliasingWarning, add_noise, read_field, write_field
from .solvers import PRECONDITIONERS


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


# flag name -> config field
_OVERRIDES = {"scenario": "scenario", "nx": "nx", "order": "r", "omega1": "omega1", "omega2": "omega2",
              "rho": "rho", "noise_modes": "noise_modes", "ell": "ell", "h_scale": "h_scale", "c0": "c0",
              "cg_tol": "cg_tol", "precond": "precond", "seed": "seed", "n_bumps": "n_bumps",
              "boundary": "boundary", "out": "out_dir", "cache": "cache_dir"}


def _common(p):
    p.add_argument("--config", type=Path, help="JSON config; explicit flags override its values")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--nx", type=int, help="elements per axis of the data mesh (default 40)")
    p.add_argument("--reference-scale", action="store_true", help=f"use nx={REFERENCE_NX}")
    p.add_argument("--order", type=int, help="polynomial order r (default 5)")
    p.add_argument("--omega1", type=float)
    p.add_argument("--omega2", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--boundary", choices=("static", "frequency"))
    p.add_argument("--noise-modes", type=int)
    p.add_argument("--ell", type=int)
    p.add_argument("--h-scale", type=float, help="constant in front of the automatic size rule")
    p.add_argument("--c0", type=float, help="invertibility margin on |det E|")
    p.add_argument("--cg-tol", type=float)
    p.add_argument("--precond", choices=PRECONDITIONERS)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-bumps", type=int)
    p.add_argument("--cache", help="directory for cached forward fields")
    p.add_argument("--out", help="output directory")
    p.add_argument("--timing", action="store_true", help="record wall times (breaks byte determinism)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_config(args, **extra):
    cfg = ExperimentConfig.load(args.config).to_dict() if getattr(args, "config", None) else {}
    for flag, key in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "reference_scale", False):
        cfg["nx"] = REFERENCE_NX
    if getattr(args, "timing", False):
        cfg["timing"] = True
    for k, v in extra.items():
        if v is not None:
            cfg[k] = v
    return ExperimentConfig.from_dict(cfg).validate()


def _out_dir(config, default):
    out = Path(config.out_dir or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print(obj):
    print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def cmd_forward(args):
    config = build_config(args)
    out = _out_dir(config, "forward-out")
    data = forward_fields(config)
    paths = {name: str(write_field(f, out / f"{name}.fld"))
             for name, f in (("u1", data.u1), ("u2", data.u2), ("alpha", data.material.alpha),
                             ("beta", data.material.beta))}
    config.dump(out / "config.json")
    _print({"fields": paths})


def cmd_noise(args):
    u = read_field(args.input)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AliasingWarning)
        noisy = add_noise(u, args.delta, args.noise_modes or 20)
    write_field(noisy, args.output)
    _print({"output": args.output, "delta": args.delta, "warnings": [str(w.message) for w in caught]})


def cmd_reconstruct(args):
    k2 = args.k2 if args.k2 is not None else (args.k1 or 1)
    config = build_config(args, deltas=[args.delta], ks=[k2], k1=args.k1, auto_h=args.auto_h or None,
                          save_fields=True)
    config.out_dir = str(_out_dir(config, "reconstruct-out"))
    result = run_scenario(config, _data_with_inputs(config, args))
    _print(result.report())


def _data_with_inputs(config, args):
    data = forward_fields(config)
    if args.u1 or args.u2:
        if not (args.u1 and args.u2):
            raise SystemExit("--u1 and --u2 must be given together")
        data.u1 = read_field(args.u1, data.space)
        data.u2 = read_field(args.u2, data.space)
    return data


def cmd_sweep(args, fn):
    config = build_config(args, deltas=args.deltas, ks=args.ks, auto_h=getattr(args, "auto_h", None) or None)
    out = _out_dir(config, f"{args.command}-out")
    config.out_dir = str(out)
    result = fn(config)
    emit_csv(result, out / "sweep.csv")
    failed = sum(r.cg_iters < 0 for r in result.rows)
    print(f"wrote {out / 'sweep.csv'} ({len(result.rows)} rows, {failed} failed)")


def cmd_ode(args):
    config = build_config(args, deltas=args.deltas)
    checks = ode_check(config, k=args.k)
    _print([c.__dict__ for c in checks])


def make_parser():
    ap = argparse.ArgumentParser(prog="elastorecon", description="Moduli reconstruction from displacement fields")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="solve the forward problems and write field files")
    _common(p)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("noise", help="add deterministic noise to a field file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--noise-modes", type=int)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("reconstruct", help="one reconstruction")
    _common(p)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--k1", type=int, help="coarsening for strains")
    p.add_argument("--k2", type=int, help="coarsening for hessians (defaults to k1)")
    p.add_argument("--auto-h", action="store_true", help="pick k1, k2 from the noise level")
    p.add_argument("--u1", help="measured field file for the first experiment")
    p.add_argument("--u2", help="measured field file for the second experiment")
    p.set_defaults(func=cmd_reconstruct)

    for name, fn, ks in (("sweep-h", sweep_h, DEFAULT_K_GRID), ("sweep-delta", sweep_delta, (1,))):
        p = sub.add_parser(name, help="error table over (delta, k); writes sweep.csv and report.json")
        _common(p)
        p.add_argument("--delta", dest="deltas", type=_floats, default=None, help="comma-separated noise levels")
        p.add_argument("--k", dest="ks", type=_ints, default=None,
                       help=f"comma-separated coarsening factors (default {','.join(map(str, ks))})")
        if name == "sweep-delta":
            p.add_argument("--auto-h", action="store_true")
        p.set_defaults(func=lambda a, fn=fn: cmd_sweep(a, fn), default_ks=ks)

    p = sub.add_parser("ode-check", help="integrate along two polylines and compare endpoints")
    _common(p)
    p.add_argument("--delta", dest="deltas", type=_floats, default=[0.0])
    p.add_argument("--k", type=int, default=1)
    p.set_defaults(func=cmd_ode)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    if args.command in ("sweep-h", "sweep-delta") and args.ks is None and not getattr(args, "config", None):
        args.ks = [k for k in args.default_ks if (args.nx or (REFERENCE_NX if args.reference_scale else 40)) % k == 0]
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
