"""Command line entry point ``longlines``.

Exit codes: 0 success, 1 usage error, 2 calibration or convergence failure,
3 a ``verify`` check returned a fail verdict.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from longlines import __version__
from longlines.config import SET_KINDS, ConfigError, ExperimentConfig, SetOptions
from longlines.core import Segment
from longlines.diagnostics import CATALOG, DEFAULT_RUNS, UnknownClaimError, check_claim, write_csv
from longlines.finder import FinderConstants, Regime, default_params, find_long_line
from longlines.linemeasure import measure_segment
from longlines.perturb import SchemeConstraintError, tv_estimate
from longlines.rng import RandomStream
from longlines.samplers import measure_sampler
from longlines.scaling import build_witness_set, fit_summary, run_scaling, scaling_csv, write_outputs
from longlines.sets import CalibrationError, ball_shell_construction, mc_volume, striped_cube_shell

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CALIBRATION = 2
EXIT_VERDICT = 3

MEASURE_KINDS = ("lp-ball", "cube", "gaussian", "mixture", "simplex")
CLI_SET_KINDS = ("ball-shell", "striped-cube-shell") + SET_KINDS


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _p_value(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity", "cube"):
        return math.inf
    return float(t)


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _regime_from(args) -> Regime:
    if getattr(args, "regime", None):
        return Regime.parse(args.regime)
    return Regime.parse(args.p)


def _build_set(args, stream: RandomStream):
    kind = args.kind
    if kind == "ball-shell":
        return ball_shell_construction(args.n)
    if kind == "striped-cube-shell":
        return striped_cube_shell(args.n, args.lam, args.eps, args.delta, stream)
    opts = SetOptions(kind=kind, shell_scale=args.shell_scale, ball_factor=args.ball_factor,
                      stripe_lambda=args.lam, stripe_delta=args.delta)
    return build_witness_set(_regime_from(args), args.n, args.target, opts, stream)


def _add_set_args(sp):
    sp.add_argument("--kind", choices=CLI_SET_KINDS, default="auto", help="witness set family")
    sp.add_argument("--n", type=int, required=True, help="dimension")
    sp.add_argument("--p", type=_p_value, default=math.inf, help="l_p exponent (inf for the cube)")
    sp.add_argument("--regime", default=None, help="regime name; overrides --p")
    sp.add_argument("--target", type=float, default=0.5, help="mass the set is calibrated to")
    sp.add_argument("--shell-scale", type=float, default=1.0, help="hybrid shell profile scale")
    sp.add_argument("--ball-factor", type=float, default=5.0, help="ball radius over sqrt(n)")
    sp.add_argument("--lam", type=float, default=0.5, help="kept stripe fraction")
    sp.add_argument("--delta", type=float, default=1e-4, help="stripe width")
    sp.add_argument("--eps", type=float, default=0.02, help="slack of the striped cube shell")


def _cmd_sample(args, out) -> int:
    sampler = measure_sampler(args.measure, args.n, args.p)
    pts = sampler(RandomStream(args.seed), args.count)
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(args.n)])
    for row in np.atleast_2d(pts):
        w.writerow([f"{v:.17g}" for v in row])
    return EXIT_OK


def _cmd_shell_volume(args, out) -> int:
    st = RandomStream(args.seed)
    A = _build_set(args, st.split(0))
    if A.ambient is None:
        raise UsageError(f"set kind {args.kind} has no ambient measure")
    est, se = mc_volume(A, st.split(1), args.samples)
    out.write(f"{est:.4f} +/- {se:.4f}\n")
    return EXIT_OK


def _cmd_measure_line(args, out) -> int:
    st = RandomStream(args.seed)
    A = _build_set(args, st.split(0))
    if args.origin is not None and args.direction is not None:
        seg = Segment(args.origin, args.direction, args.t_max)
    elif args.origin is None and args.direction is None:
        if A.ambient is None:
            raise UsageError("a random segment needs a set with an ambient measure")
        pts = A.sample_ambient(st.split(1), 2)
        seg = Segment(pts[0], pts[1] - pts[0], 1.0)
    else:
        raise UsageError("give both --origin and --direction, or neither")
    if seg.n != A.n:
        raise UsageError("segment and set dimensions differ")
    res = measure_segment(A, seg, args.step, st.split(2), method=args.method)
    out.write(json.dumps({**res.to_record(), "segment_length": seg.length}) + "\n")
    return EXIT_OK


def _constants(args) -> FinderConstants:
    return FinderConstants(eps=args.scheme_eps, R_scale=args.R_scale)


def _cmd_find_line(args, out) -> int:
    st = RandomStream(args.seed)
    A = _build_set(args, st.split(0))
    scheme = default_params(_regime_from(args), args.n, args.target, _constants(args))
    cert = find_long_line(A, scheme, args.trials, args.u_grid, st.split(1))
    out.write(json.dumps(cert.to_record(include_points=args.points), default=_json_default) + "\n")
    return EXIT_OK


def _cmd_tv(args, out) -> int:
    scheme = default_params(_regime_from(args), args.n, args.a, _constants(args))
    changes = {k: v for k, v in (("r", args.r), ("R", args.R)) if v is not None}
    if changes:
        scheme = dataclasses.replace(scheme, **changes)
    est = tv_estimate(scheme, args.samples, RandomStream(args.seed))
    out.write(f"{est.value:.6g} +/- {est.stderr:.3g}\n")
    if args.json:
        out.write(json.dumps(est.to_record()) + "\n")
    return EXIT_OK


def _cmd_verify(args, out) -> int:
    st = RandomStream(args.seed)
    claims = args.claim or ["all"]
    overrides = {k: v for k, v in (("p", args.p), ("n", args.n), ("samples", args.samples)) if v is not None}
    runs = []
    for c in claims:
        if c == "all":
            runs += [(name, {**params, **overrides}) for name, params in DEFAULT_RUNS]
        elif c in CATALOG:
            runs.append((c, dict(overrides)))
        else:
            raise UnknownClaimError(c)
    reports = []
    for j, (claim, params) in enumerate(runs):
        sub = st if len(runs) == 1 else st.split(j)
        reports.extend(check_claim(claim, params, sub))
    write_csv(reports, out)
    return EXIT_VERDICT if any(r.verdict == "fail" for r in reports) else EXIT_OK


def _cmd_scaling(args, out) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    record = run_scaling(cfg, workers=args.workers)
    target = args.out or cfg.output
    write_outputs(record, target)
    out.write(scaling_csv(record))
    out.write(fit_summary(record) + "\n")
    failed = [pt for pt in record.points if pt.error]
    for pt in failed:
        sys.stderr.write(f"n={pt.n}: {pt.error}\n")
    return EXIT_CALIBRATION if failed else EXIT_OK


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="longlines", description="Long line intersections of large sets in high dimension.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("sample", help="CSV of points from a measure")
    sp.add_argument("--measure", choices=MEASURE_KINDS, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=_p_value, default=2.0)
    sp.add_argument("--count", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_sample)

    sp = sub.add_parser("shell-volume", help="Monte Carlo mass of a witness set")
    _add_set_args(sp)
    sp.add_argument("--samples", type=int, default=10 ** 5)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_shell_volume)

    sp = sub.add_parser("measure-line", help="length of a set along a segment")
    _add_set_args(sp)
    sp.add_argument("--origin", type=_vector, default=None, help="comma separated coordinates")
    sp.add_argument("--direction", type=_vector, default=None, help="comma separated coordinates")
    sp.add_argument("--t-max", type=float, default=1.0)
    sp.add_argument("--step", type=float, default=1e-3, help="grid cell length without an intersector")
    sp.add_argument("--method", choices=("auto", "exact", "grid", "mc"), default="auto")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_measure_line)

    sp = sub.add_parser("find-line", help="best certificate of the perturbation finder")
    _add_set_args(sp)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--u-grid", type=int, default=256)
    sp.add_argument("--scheme-eps", type=float, default=0.05)
    sp.add_argument("--R-scale", type=float, default=1.0)
    sp.add_argument("--points", action="store_true", help="include the segment coordinates")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_find_line)

    sp = sub.add_parser("tv-estimate", help="total variation between a measure and its perturbation")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=_p_value, default=math.inf)
    sp.add_argument("--regime", default=None)
    sp.add_argument("--a", type=float, default=0.5)
    sp.add_argument("--r", type=float, default=None, help="override the scheme amplitude")
    sp.add_argument("--R", type=float, default=None, help="override the scheme frequency")
    sp.add_argument("--scheme-eps", type=float, default=0.05)
    sp.add_argument("--R-scale", type=float, default=1.0)
    sp.add_argument("--samples", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=_cmd_tv)

    sp = sub.add_parser("verify", help="run statistical checks and print CheckReport CSV")
    sp.add_argument("--claim", action="append", help=f"claim id or 'all'; one of {', '.join(CATALOG)}")
    sp.add_argument("--p", type=_p_value, default=None)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("scaling", help="run a scaling experiment from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None, help="output directory (default: the config's output)")
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(func=_cmd_scaling)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return args.func(args, out)
    except (UsageError, ConfigError, UnknownClaimError, SchemeConstraintError) as exc:
        msg = exc.args[0] if isinstance(exc, UnknownClaimError) else str(exc)
        sys.stderr.write(f"usage error: {msg}\n")
        return EXIT_USAGE
    except (CalibrationError, FloatingPointError) as exc:
        sys.stderr.write(f"calibration or convergence failure: {exc}\n")
        return EXIT_CALIBRATION
    except ValueError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
