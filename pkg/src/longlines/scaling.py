"""Scaling experiments: lower certificates and upper witnesses across dimensions.

For every n of the ladder the experiment uses the substreams of
``RandomStream(seed).split(n)``:

* ``split(0)`` calibrates the witness set to its target mass;
* ``split(1)`` drives :func:`find_long_line` (the lower certificate);
* ``split(2)`` drives :func:`sup_line_search` (the upper witness);
* ``split(3)`` draws near-tangent candidate lines for the sup search.

The sup search is seeded with every finder segment, so the upper witness is
never shorter than the lower certificate.  Per-n jobs are independent and may
run in worker processes; rows are always reported in n order.
"""

from __future__ import annotations

import concurrent.futures as cf
import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from longlines.config import ExperimentConfig, SetOptions
from longlines.core import LpBall
from longlines.finder import Regime, default_params, find_long_line
from longlines.linemeasure import sup_line_search, tangent_seeds
from longlines.rng import RandomStream
from longlines.samplers import gaussian_product, sample_gaussian_mixture, sample_simplex
from longlines.sets import (
    CalibrationError,
    MembershipSet,
    body_l2_shell,
    euclidean_ball_set,
    euclidean_shell,
    hybrid_shell,
    lp_shell,
    mc_volume,
    product_norm_shell,
    striped_subset,
)

CSV_COLUMNS = ["n", "p", "a", "lower_len", "upper_len", "lower_fraction", "seed"]
VOLUME_SAMPLES = 20000


class FitError(ValueError):
    """The points cannot be fitted (too few, non-positive, or degenerate)."""


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    points: tuple[tuple[float, float], ...]

    def to_record(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "slope_stderr": self.slope_stderr,
                "r_squared": self.r_squared, "points": [list(p) for p in self.points]}


def fit_exponent(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Ordinary least squares of log(length) on log(n).

    ``points`` are (n, length) pairs; at least four are needed.  The slope
    standard error comes from the residual variance.
    """
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 4:
        raise FitError("need at least 4 points")
    if any(n <= 0 or v <= 0 or not math.isfinite(v) for n, v in pts):
        raise FitError("abscissas and lengths must be positive and finite")
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    if np.ptp(x) == 0:
        raise FitError("degenerate abscissas")
    res = stats.linregress(x, y)
    slope = float(res.slope)
    se = float(res.stderr)
    r2 = float(res.rvalue) ** 2 if math.isfinite(res.rvalue) else 1.0
    if np.ptp(y) == 0:
        # constant data: the fit is exact and the correlation is undefined
        slope, se, r2 = 0.0, 0.0, 1.0
    return ScalingFit(slope, float(res.intercept), se, r2, tuple(zip(x.tolist(), y.tolist())))


# ----------------------------------------------------------------------------
# witness sets per regime
# ----------------------------------------------------------------------------


def _calibrated_l2_shell(n: int, ambient, stream: RandomStream, target: float, samples: int,
                         kind: str) -> MembershipSet:
    """Euclidean shell around the median squared norm holding mass ``target``."""
    pts = ambient(stream.split(0), samples)
    sq = np.einsum("ij,ij->i", pts, pts)
    mid = float(np.median(sq))
    half = float(np.quantile(np.abs(sq - mid), target))
    lo2 = max(mid - half, 0.0)
    return euclidean_shell(math.sqrt(lo2), math.sqrt(mid + half), n, ambient=ambient,
                           descriptor={"kind": kind, "n": n, "target": target, "seed": stream.label()})


def _base_kind(regime: Regime) -> str:
    if regime.kind == "cube":
        return "body-l2-shell"
    if regime.kind in ("gaussian", "gaussian-product"):
        return "product-norm-shell"
    if regime.kind == "mixture":
        return "euclidean-ball"
    if regime.kind == "simplex":
        return "simplex-l2-shell"
    if regime.p > 2:
        return "hybrid-shell"
    if regime.p > 1:
        return "lp-shell"
    return "body-l2-shell"


def _plain_set(kind: str, regime: Regime, n: int, target: float, opts: SetOptions,
               stream: RandomStream) -> MembershipSet:
    if kind == "auto":
        kind = _base_kind(regime)
    p = regime.p
    if kind == "body-l2-shell":
        return body_l2_shell(LpBall(p, n), stream, target=target, calib_samples=opts.calib_samples)
    if kind == "hybrid-shell":
        return hybrid_shell(p, n, stream, scale=opts.shell_scale, target=target,
                            calib_samples=opts.calib_samples)
    if kind == "lp-shell":
        return lp_shell(p, n, stream, target=target, calib_samples=opts.calib_samples)
    if kind == "product-norm-shell":
        return product_norm_shell(gaussian_product(n), 1.0 - target, stream, calib_samples=opts.calib_samples)
    if kind == "euclidean-ball":
        ambient = (lambda s, size: sample_gaussian_mixture(n, s, size)) if regime.kind == "mixture" else None
        return euclidean_ball_set(opts.ball_factor * math.sqrt(n), n, ambient=ambient)
    if kind == "simplex-l2-shell":
        return _calibrated_l2_shell(n, lambda s, size: sample_simplex(n, s, size), stream, target,
                                    opts.calib_samples, kind)
    raise CalibrationError(f"set kind {kind!r} does not fit regime {regime.label()}")


def build_witness_set(regime, n: int, a: float, opts: Optional[SetOptions] = None,
                      stream: Optional[RandomStream] = None) -> MembershipSet:
    """The witness set of ``regime`` in dimension ``n`` with mass about ``a``.

    Striped sets keep a fraction lam of the radial stripes of a base set of
    mass min(1 - shell_eps, a / lam), so their mass is about a.
    """
    reg = Regime.parse(regime)
    o = opts or SetOptions()
    st = stream if stream is not None else RandomStream(0)
    if o.kind != "striped":
        return _plain_set(o.kind, reg, n, a, o, st)
    lam = o.stripe_lambda if o.stripe_lambda > 0 else a
    if not 0 < lam < 1:
        raise CalibrationError("stripe fraction must lie in (0, 1)")
    base_target = min(1.0 - o.shell_eps, a / lam)
    base = _plain_set(o.stripe_base, reg, n, base_target, o, st.split(0))
    return striped_subset(base, lam, o.stripe_delta, stream=st.split(1),
                          k=o.stripe_k if o.stripe_k > 0 else None, samples=o.calib_samples)


# ----------------------------------------------------------------------------
# experiment
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PointResult:
    n: int
    lower_len: float
    upper_len: float
    lower_fraction: float
    seed: str
    set_descriptor: dict
    certificate: dict
    upper_segment: dict
    mass: float
    mass_stderr: float
    seconds: float
    error: str = ""

    def csv_row(self, p: float, a: float) -> dict:
        return {
            "n": self.n,
            "p": "inf" if math.isinf(p) else f"{p:g}",
            "a": f"{a:g}",
            "lower_len": "" if self.error else f"{self.lower_len:.12g}",
            "upper_len": "" if self.error else f"{self.upper_len:.12g}",
            "lower_fraction": "" if self.error else f"{self.lower_fraction:.6g}",
            "seed": self.seed,
        }


@dataclass
class ResultRecord:
    experiment_id: str
    config: dict
    config_hash: str
    version: str
    started: str
    finished: str
    points: list = field(default_factory=list)
    lower_fit: Optional[ScalingFit] = None
    upper_fit: Optional[ScalingFit] = None

    def envelope(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "config_hash": self.config_hash,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "config": self.config,
            "points": [asdict(p) for p in self.points],
            "lower_fit": self.lower_fit.to_record() if self.lower_fit else None,
            "upper_fit": self.upper_fit.to_record() if self.upper_fit else None,
        }


def run_point(config: ExperimentConfig, n: int, measure_mass: bool = True) -> PointResult:
    """One rung of the ladder: build the set, certify, and search for the sup."""
    t0 = time.perf_counter()
    st = RandomStream(config.seed).split(n)
    reg = config.regime_obj
    try:
        A = build_witness_set(reg, n, config.a, config.set_options, st.split(0))
        scheme = default_params(reg, n, config.a, config.constants)
    except (CalibrationError, ValueError) as exc:
        return PointResult(n, 0.0, 0.0, 0.0, st.label(), {}, {}, {}, 0.0, 0.0,
                           time.perf_counter() - t0, f"calibration failed: {exc}")
    collected: list = []
    cert = find_long_line(A, scheme, config.trials, config.u_grid, st.split(1), collect=collected)
    seeds = [c.segment for c in collected if c.segment is not None]
    if config.tangent_seeds > 0:
        seeds += tangent_seeds(A, config.tangent_seeds, st.split(3))
    seg, res = sup_line_search(A, config.sup_trials, st.split(2), seeds=seeds)
    mass, mass_se = (mc_volume(A, st.split(4), VOLUME_SAMPLES) if measure_mass and A.ambient is not None
                     else (math.nan, math.nan))
    return PointResult(
        n=n,
        lower_len=cert.certified_length,
        upper_len=max(res.length, cert.certified_length),
        lower_fraction=cert.fraction,
        seed=st.label(),
        set_descriptor=_jsonable(A.descriptor),
        certificate=_jsonable(cert.to_record(include_points=False)),
        upper_segment={"length": res.length, "segment_length": seg.length},
        mass=float(mass),
        mass_stderr=float(mass_se),
        seconds=time.perf_counter() - t0,
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _fit_or_none(points) -> Optional[ScalingFit]:
    try:
        return fit_exponent(points)
    except FitError:
        return None


def run_scaling(config: ExperimentConfig, workers: Optional[int] = None) -> ResultRecord:
    """Run every rung of the ladder and fit both length curves."""
    from longlines import __version__

    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    w = workers if workers is not None else config.workers
    if w > 1:
        with cf.ProcessPoolExecutor(max_workers=w) as pool:
            futures = {n: pool.submit(run_point, config, n) for n in config.n_values}
            points = [futures[n].result() for n in config.n_values]
    else:
        points = [run_point(config, n) for n in config.n_values]
    ok = [pt for pt in points if not pt.error]
    rec = ResultRecord(
        experiment_id=config.experiment_id,
        config=_jsonable(config.to_dict()),
        config_hash=config.config_hash(),
        version=__version__,
        started=started,
        finished=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        points=points,
        lower_fit=_fit_or_none([(pt.n, pt.lower_len) for pt in ok]),
        upper_fit=_fit_or_none([(pt.n, pt.upper_len) for pt in ok]),
    )
    return rec


# ----------------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------------


def scaling_csv(record: ResultRecord) -> str:
    reg = Regime.parse(record.config["regime"])
    a = float(record.config["a"])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for pt in record.points:
        w.writerow(pt.csv_row(reg.p, a))
    return buf.getvalue()


def fit_summary(record: ResultRecord) -> str:
    lines = []
    for name, fit in (("lower", record.lower_fit), ("upper", record.upper_fit)):
        if fit is None:
            lines.append(f"{name}: no fit")
        else:
            lines.append(f"{name}: slope {fit.slope:.4f} +/- {fit.slope_stderr:.4f} (r^2 {fit.r_squared:.4f})")
    return "\n".join(lines)


def plot_data(record: ResultRecord) -> str:
    """gnuplot data: block 0 holds the measured lengths, block 1 the fitted lines."""
    out = ["# n lower_len upper_len"]
    for pt in record.points:
        if not pt.error:
            out.append(f"{pt.n} {pt.lower_len:.10g} {pt.upper_len:.10g}")
    out += ["", "", "# n lower_fit upper_fit"]
    lf, uf = record.lower_fit, record.upper_fit
    if lf is not None and uf is not None:
        for pt in record.points:
            if not pt.error:
                x = math.log(pt.n)
                out.append(f"{pt.n} {math.exp(lf.intercept + lf.slope * x):.10g} "
                           f"{math.exp(uf.intercept + uf.slope * x):.10g}")
    return "\n".join(out) + "\n"


def write_outputs(record: ResultRecord, directory) -> dict:
    """Write scaling.csv, result.json (appended to results.jsonl too) and plot.dat."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"csv": d / "scaling.csv", "json": d / "result.json", "log": d / "results.jsonl",
             "plot": d / "plot.dat"}
    paths["csv"].write_text(scaling_csv(record))
    env = record.envelope()
    paths["json"].write_text(json.dumps(env, indent=2, sort_keys=True) + "\n")
    with paths["log"].open("a") as fh:
        fh.write(json.dumps(env, sort_keys=True) + "\n")
    paths["plot"].write_text(plot_data(record))
    return {k: str(v) for k, v in paths.items()}


__all__ = [
    "CSV_COLUMNS",
    "FitError",
    "PointResult",
    "ResultRecord",
    "ScalingFit",
    "build_witness_set",
    "fit_exponent",
    "fit_summary",
    "plot_data",
    "run_point",
    "run_scaling",
    "scaling_csv",
    "write_outputs",
]
