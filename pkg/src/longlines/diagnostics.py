"""Monte Carlo and quadrature checks of the auxiliary probabilistic facts.

Every check returns one or more :class:`CheckReport` rows.  A verdict is
decided by a three-standard-error rule against a threshold:

* ``le`` / ``ge``: pass when the estimate is on the claimed side by at
  least 3 standard errors, fail when on the wrong side by at least 3,
  otherwise inconclusive;
* ``band`` (threshold ``(lo, hi)``): pass when the whole 3-sigma interval
  lies inside the band, fail when it lies entirely outside;
* ``eq``: pass when the estimate is within 3 standard errors of the
  threshold, fail otherwise.

Claims with unknown constants (``<= C * rate``) are checked for rate
stability: the constant fitted at n and at 2n may grow by less than 25%.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import special

from longlines.core import LpBall, a_tilde, log_kappa, psi_bump
from longlines.perturb import (
    DEFAULT_EPS,
    LowPScheme,
    _solve_shift,
    apply_scheme,
    gaussian_tv,
)
from longlines.rng import RandomStream
from longlines.samplers import sample_exp_power, sample_lp_ball_latent

DEFAULT_SAMPLES = 10 ** 5
STABILITY_GROWTH = 1.25
SIGMAS = 3.0
_CHUNK_ENTRIES = 1 << 22

Threshold = Union[float, tuple[float, float]]


class UnknownClaimError(KeyError):
    """No check is registered under the requested identifier."""


@dataclass(frozen=True)
class CheckReport:
    claim_id: str
    n: int
    p: float
    estimate: float
    stderr: float
    threshold: Threshold
    side: str
    verdict: str
    samples: int
    seed: str
    note: str = ""

    def row(self) -> dict:
        thr = self.threshold
        thr_text = f"{thr[0]:.6g}..{thr[1]:.6g}" if isinstance(thr, tuple) else f"{thr:.6g}"
        return {
            "claim_id": self.claim_id,
            "n": self.n,
            "p": f"{self.p:g}",
            "estimate": f"{self.estimate:.10g}",
            "stderr": f"{self.stderr:.4g}",
            "threshold": thr_text,
            "verdict": self.verdict,
            "seed": self.seed,
        }


CSV_FIELDS = ["claim_id", "n", "p", "estimate", "stderr", "threshold", "verdict", "seed"]


def verdict(estimate: float, stderr: float, threshold: Threshold, side: str) -> str:
    """Three-standard-error decision rule described in the module docstring."""
    m = SIGMAS * stderr
    if side == "le":
        if threshold - estimate >= m:
            return "pass"
        if estimate - threshold >= m:
            return "fail"
        return "inconclusive"
    if side == "ge":
        if estimate - threshold >= m:
            return "pass"
        if threshold - estimate >= m:
            return "fail"
        return "inconclusive"
    if side == "band":
        lo, hi = threshold
        if lo + m <= estimate <= hi - m:
            return "pass"
        if estimate + m < lo or estimate - m > hi:
            return "fail"
        return "inconclusive"
    if side == "eq":
        return "pass" if abs(estimate - threshold) <= m else "fail"
    raise ValueError(f"unknown side {side!r}")


def _report(claim_id, n, p, est, se, thr, side, samples, stream, note="") -> CheckReport:
    return CheckReport(claim_id, int(n), float(p), float(est), float(se), thr, side,
                       verdict(float(est), float(se), thr, side), int(samples), stream.label(), note)


def write_csv(reports, handle=None) -> str:
    """Write report rows as CSV; returns the text when ``handle`` is None."""
    buf = handle if handle is not None else io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue() if handle is None else ""


# ----------------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------------


def _mean_se(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _binom_se(phat: float, samples: int) -> float:
    # floor the variance at 1/N so that an all-zero sample still has a scale
    return math.sqrt(max(phat * (1.0 - phat), 1.0 / samples) / samples)


def _ratio_se(a, sa, b, sb):
    """Delta-method standard error of a / b for independent a, b."""
    return abs(a / b) * math.sqrt((sa / a) ** 2 + (sb / b) ** 2)


def _latent_chunks(ball: LpBall, stream: RandomStream, samples: int):
    """Yield (X, g, Z) chunks of uniform l_p ball points with their latents."""
    per = max(1, _CHUNK_ENTRIES // ball.n)
    done, j = 0, 0
    while done < samples:
        m = min(per, samples - done)
        yield sample_lp_ball_latent(ball, stream.split(j), m)
        done += m
        j += 1


def _ball_chunks(ball: LpBall, stream: RandomStream, samples: int):
    per = max(1, _CHUNK_ENTRIES // ball.n)
    done, j = 0, 0
    while done < samples:
        m = min(per, samples - done)
        gen = stream.split(j).generator()
        if ball.is_cube:
            yield gen.uniform(-0.5, 0.5, (m, ball.n))
        else:
            yield sample_lp_ball_latent(ball, gen, m)[0]
        done += m
        j += 1


def marginal_density_at_zero(p: float, n: int) -> float:
    """Density of one coordinate of the uniform volume-one l_p ball at 0.

    The hyperplane section through 0 is an (n-1)-dimensional l_p ball with
    the same radius kappa, so the density is
    Gamma(1 + n/p) / (Gamma(1 + (n-1)/p) 2 Gamma(1 + 1/p) kappa).
    """
    lg = special.gammaln
    log_two_gamma = math.log(2.0) + lg(1.0 + 1.0 / p)
    return math.exp(lg(1.0 + n / p) - lg(1.0 + (n - 1) / p) - log_two_gamma - log_kappa(p, n))


def var_norm_formula(p: float) -> float:
    """(p G(5/p) G(1/p) - (p + 4) G(3/p)^2) / (p G(1/p)^2), G the Gamma function."""
    lg = special.gammaln
    a = p * math.exp(lg(5.0 / p) + lg(1.0 / p))
    b = (p + 4.0) * math.exp(2.0 * lg(3.0 / p))
    return (a - b) / (p * math.exp(2.0 * lg(1.0 / p)))


# ----------------------------------------------------------------------------
# individual checks
# ----------------------------------------------------------------------------


def _cov_squares(params, stream, samples):
    p = float(params.get("p", 3.0))
    n = int(params.get("n", 4))
    if math.isinf(p):
        # independent coordinates: the covariance vanishes identically
        return [_report("cov_squares", n, p, 0.0, 0.0, 0.0, "le", 0, stream, "exact: product measure")]
    ball = LpBall(p, n)
    a_parts, b_parts = [], []
    for X, _, _ in _latent_chunks(ball, stream, samples):
        a_parts.append(X[:, 0] ** 2)
        b_parts.append(X[:, 1] ** 2)
    a = np.concatenate(a_parts)
    b = np.concatenate(b_parts)
    prod = (a - a.mean()) * (b - b.mean())
    est, se = _mean_se(prod)
    return [_report("cov_squares", n, p, est, se, 0.0, "le", samples, stream)]


def _coord_gap(p, n, stream, samples):
    ball = LpBall(p, n)
    an = a_tilde(p, n)
    vals = []
    for X, g, _ in _latent_chunks(ball, stream, samples):
        vals.append((X[:, 0] - an * g[:, 0]) ** 2)
    return _mean_se(n * np.concatenate(vals))


def _coord_l2(params, stream, samples):
    p = float(params.get("p", 3.0))
    n = int(params.get("n", 256))
    c1, s1 = _coord_gap(p, n, stream.split(0), samples)
    c2, s2 = _coord_gap(p, 2 * n, stream.split(1), samples)
    ratio = c2 / c1
    return [_report("coord_l2", n, p, ratio, _ratio_se(c2, s2, c1, s1), STABILITY_GROWTH, "le", 2 * samples,
                    stream, f"n E(X1 - X~1)^2: {c1:.5g} at n, {c2:.5g} at 2n")]


def _phi_terms(p, n, R, stream, samples, psi):
    """Per-sample terms for the mean and covariance parts, with control variates."""
    ball = LpBall(p, n)
    an = a_tilde(p, n)
    mean_terms, cov_terms = [], []
    for X, g, _ in _latent_chunks(ball, stream, samples):
        Xt = an * g[:, :2]
        N = (np.abs(g[:, 2:]) ** p - 1.0 / p).sum(axis=1) / n
        f1, f2 = psi(R * X[:, 0]), psi(R * X[:, 1])
        t1, t2 = psi(R * Xt[:, 0]), psi(R * Xt[:, 1])
        # the leading term of f1 - t1 is -R psi'(R X~1) X~1 N, which has mean zero
        lead = -R * psi(R * Xt[:, 0], 1) * Xt[:, 0] * N
        mean_terms.append(f1 - t1 - lead)
        cov_terms.append(np.stack([f1 * f2 - t1 * t2, f1 - t1, f2 - t2, t1, t2], axis=1))
    return np.concatenate(mean_terms), np.concatenate(cov_terms)


def _cov_from_terms(T):
    """Cov(f1, f2) = E[f1 f2 - t1 t2] - (E f1 E f2 - E t1 E t2), since t1, t2 are independent."""
    m = T.mean(axis=0)
    ef1, ef2 = m[1] + m[3], m[2] + m[4]
    est = m[0] - (ef1 * ef2 - m[3] * m[4])
    # linearised influence function for the standard error
    infl = T[:, 0] - (ef2 * (T[:, 1] + T[:, 3]) + ef1 * (T[:, 2] + T[:, 4])
                      - m[4] * T[:, 3] - m[3] * T[:, 4])
    se = float(infl.std(ddof=1) / math.sqrt(T.shape[0]))
    return float(est), se


def _phi_mean(params, stream, samples):
    p = float(params.get("p", 3.0))
    n = int(params.get("n", 64))
    R = float(params.get("R", 2.0))
    psi = psi_bump(params.get("bump", "exp"))
    vals = []
    for j, m in enumerate((n, 2 * n)):
        terms, _ = _phi_terms(p, m, R, stream.split(j), samples, psi)
        est, se = _mean_se(m * terms)
        vals.append((abs(est), se))
    (c1, s1), (c2, s2) = vals
    return [_report("phi_mean", n, p, c2 / c1, _ratio_se(c2, s2, c1, s1), STABILITY_GROWTH, "le",
                    2 * samples, stream, f"n |E psi(RX1) - psi(RX~1)|: {c1:.5g}, {c2:.5g}; bump {psi.name}")]


def _phi_cov(params, stream, samples):
    p = float(params.get("p", 3.0))
    n = int(params.get("n", 16))
    R = float(params.get("R", 2.0))
    psi = psi_bump(params.get("bump", "exp"))
    vals = []
    for j, m in enumerate((n, 2 * n)):
        _, T = _phi_terms(p, m, R, stream.split(j), samples, psi)
        est, se = _cov_from_terms(T)
        vals.append((m * R * est, m * R * se))
    (c1, s1), (c2, s2) = vals
    note = f"n R Cov: {c1:.5g} at n, {c2:.5g} at 2n; bump {psi.name}"
    if c2 <= 0:
        # a non-positive covariance satisfies the upper bound outright
        return [_report("phi_cov", n, p, c2, s2, 0.0, "le", 2 * samples, stream, note)]
    ratio = c2 / abs(c1)
    return [_report("phi_cov", n, p, ratio, _ratio_se(c2, s2, c1, s1), STABILITY_GROWTH, "le",
                    2 * samples, stream, note)]


def _var_norm(params, stream, samples):
    p = float(params.get("p", 4.0))
    n = int(params.get("n", 4096))
    ball = LpBall(p, n)
    sq = np.concatenate([np.einsum("ij,ij->i", X, X) for X in _ball_chunks(ball, stream, samples)])
    var = float(sq.var(ddof=1))
    # standard error of a sample variance from the fourth central moment
    c = sq - sq.mean()
    m4 = float(np.mean(c ** 4))
    se_var = math.sqrt(max(m4 - var * var, 0.0) / sq.size)
    if math.isinf(p):
        target = n / 180.0
        return [_report("var_norm", n, p, var, se_var, target, "eq", samples, stream,
                        "Var(|X|^2) against n/180")]
    scale = n * a_tilde(p, n) ** 4
    target = var_norm_formula(p)
    ratio = var / scale / target
    return [_report("var_norm", n, p, ratio, se_var / scale / target, (0.9, 1.1), "band", samples, stream,
                    f"Var(|X|^2)/(n a_n^4) = {var / scale:.6g}; formula {target:.6g}")]


def _gauss_tail(params, stream, samples):
    n = int(params.get("n", 16))
    gen = stream.generator()
    hits = 0
    per = max(1, _CHUNK_ENTRIES // n)
    done = 0
    while done < samples:
        m = min(per, samples - done)
        W = gen.standard_normal((m, n))
        hits += int(np.count_nonzero(np.einsum("ij,ij->i", W, W) > n / 4.0))
        done += m
    ph = hits / samples
    return [_report("gauss_tail", n, math.inf, ph, _binom_se(ph, samples), 0.9, "ge", samples, stream,
                    "P(|W| > sqrt(n)/2)")]


def _gauss_tv(params, stream, samples):
    n = int(params.get("n", 256))
    r = float(params.get("r", 0.5 * n ** -0.25))
    tv = gaussian_tv(n, r)
    return [_report("gauss_tv", n, 2.0, tv, 0.0, 0.1, "le", 0, stream,
                    f"radial quadrature, r = {r:.6g}")]


def _exp_moments(params, stream, samples):
    p = float(params.get("p", 2.0))
    g = sample_exp_power(p, stream.generator(), samples)
    est, se = _mean_se(np.abs(g) ** p)
    return [_report("exp_moments", 1, p, est, se, 1.0 / p, "eq", samples, stream, "E|g|^p = 1/p")]


def _exp_var(params, stream, samples):
    p = float(params.get("p", 2.0))
    v = np.abs(sample_exp_power(p, stream.generator(), samples)) ** p
    var = float(v.var(ddof=1))
    c = v - v.mean()
    se = math.sqrt(max(float(np.mean(c ** 4)) - var * var, 0.0) / samples)
    return [_report("exp_var", 1, p, var, se, 1.0 / p, "eq", samples, stream, "Var|g|^p = 1/p")]


def _tail_rate(dev: np.ndarray, n: int, ts: np.ndarray) -> float:
    """Least-squares c in log P(dev > t) = log C - c min(t^2, t sqrt n)."""
    tail = np.array([np.mean(dev > t) for t in ts])
    ok = tail > 0
    x = np.minimum(ts[ok] ** 2, ts[ok] * math.sqrt(n))
    y = np.log(tail[ok])
    slope = np.polyfit(x, y, 1)[0]
    return -float(slope)


def _bernstein_shell(params, stream, samples):
    n = int(params.get("n", 256))
    batches = int(params.get("batches", 20))
    ts = np.linspace(0.25, 2.0, 8)
    rates = []
    for j, m in enumerate((n, 2 * n)):
        gen = stream.split(j).generator()
        per = samples // batches
        E = math.sqrt(m)
        vals = []
        for _ in range(batches):
            X = gen.standard_normal((per, m))
            dev = np.abs(np.sqrt(np.einsum("ij,ij->i", X, X)) - E)
            vals.append(_tail_rate(dev, m, ts))
        rates.append(_mean_se(np.array(vals)))
    (c1, s1), (c2, s2) = rates
    # the fitted rate may not drop by more than the stability allowance
    ratio = c1 / c2
    return [_report("bernstein_shell", n, 2.0, ratio, _ratio_se(c1, s1, c2, s2), STABILITY_GROWTH, "le",
                    2 * samples, stream, f"fitted tail rate {c1:.4g} at n, {c2:.4g} at 2n (Gaussian product)")]


def _highp_default(p, n, eps):
    from longlines.finder import FinderConstants, default_params

    return default_params(p, n, 0.5, FinderConstants(eps=eps))


def _highp_sets(params, stream, samples):
    p = float(params.get("p", 3.0))
    n = int(params.get("n", 512))
    eps = float(params.get("eps", DEFAULT_EPS))
    samples = min(samples, int(params.get("max_samples", 20000)))
    out = []
    # A1: exact volume of the inner l_p ball against Monte Carlo
    ball = LpBall(p, n)
    kp = ball.kappa ** p
    exact = (1.0 - eps / kp) ** (n / p)
    inside = np.concatenate([
        np.abs(X) .__pow__(p).sum(axis=1) <= kp - eps for X in _ball_chunks(ball, stream.split(0), samples)
    ])
    ph = float(inside.mean())
    out.append(_report("highp_sets:A1", n, p, ph, _binom_se(ph, samples), exact, "eq", samples, stream,
                       f"exact (1 - eps/kappa^p)^(n/p) = {exact:.6g}"))
    # A2: E|I(X)| R / n against the exact marginal density of X_1 at 0, which
    # bounds the marginal density everywhere (the marginal is log-concave and even)
    sch = _highp_default(p, n, eps)
    counts = np.concatenate([
        ((sch.R * X >= 1.0) & (sch.R * X <= 2.0)).sum(axis=1)
        for X in _ball_chunks(ball, stream.split(1), samples)
    ])
    est, se = _mean_se(counts * sch.R / n)
    f0 = marginal_density_at_zero(p, n)
    out.append(_report("highp_sets:I", n, p, est, se, f0, "le", samples, stream,
                       f"E|I| R / n against marginal density at 0 = {f0:.5g}"))
    # A3: |sum g(X_i)| exceeds eps with probability at most eps
    sums = []
    for X in _ball_chunks(ball, stream.split(2), samples):
        f0, f1, f2 = (sch.phi(X, k) for k in range(3))
        sums.append((f0 * f2 + f1 * f1).sum(axis=1))
    big = float(np.mean(np.abs(np.concatenate(sums)) > eps))
    out.append(_report("highp_sets:A3", n, p, big, _binom_se(big, samples), eps, "le", samples, stream,
                       "P(|sum g(X_i)| > eps)"))
    return out


def _escape_prob(params, stream, samples):
    """Escape frequency of x(y, delta) from the ball against exp(-c eps^4 / (R r)^2).

    Points y are uniform on A1 n A2.  The r grid is a range of fractions of
    the largest r keeping the map monotone.  The constant c is fitted at the
    smallest r, where the frequency is deepest in its tail, and the bound is
    then checked at the larger r values.
    """
    p = float(params.get("p", 3.0))
    n = int(params.get("n", 512))
    eps = float(params.get("eps", DEFAULT_EPS))
    draws = int(params.get("points", 1000))
    per_point = max(1, samples // draws)
    base = _highp_default(p, n, eps)
    R, ball, psi = base.R, base.ball, base.psi
    kp = ball.kappa ** p
    r_max = float(params.get("r_max", 0.8 / (R * psi.max_slope)))
    rs = r_max * np.array(params.get("r_grid", [0.6, 0.5, 0.45, 0.4, 0.35]))
    X = np.concatenate(list(_ball_chunks(ball, stream.split(0), 3 * draws)))
    act = ((R * X >= 1.0) & (R * X <= 2.0)).sum(axis=1)
    norm_p = (np.abs(X) ** p).sum(axis=1)
    keep = (norm_p <= kp - eps) & (act <= n / (R * eps))
    Y, norm_p = X[keep][:draws], norm_p[keep][:draws]
    rows = Y.shape[0]
    gen = stream.split(1).generator()
    freqs = []
    for r in rs:
        # only coordinates within reach of the bump support can move
        reach = r * psi.max_value
        mask = (R * (Y + reach) >= 1.0) & (R * (Y - reach) <= 2.0)
        ri, ci = np.nonzero(mask)
        vals = np.tile(Y[ri, ci], per_point)
        owner = np.tile(ri, per_point) + rows * np.repeat(np.arange(per_point), ri.size)
        signs = gen.integers(0, 2, vals.size) * 2.0 - 1.0
        x = _solve_shift(psi, vals, r, signs, scale_in=R)
        change = np.bincount(owner, np.abs(x) ** p - np.abs(vals) ** p, minlength=rows * per_point)
        new_norm = np.tile(norm_p, per_point) + change
        total = rows * per_point
        freqs.append((int(np.count_nonzero(new_norm > kp)) / total, total))
    # fit c where the frequency is deepest in its tail (smallest r), then
    # check that the bound dominates on the rest of the grid
    q0, t0 = freqs[-1]
    z0 = eps ** 4 / (R * rs[-1]) ** 2
    c = -math.log(max(q0, 0.5 / t0)) / z0
    worst, worst_se = -math.inf, 0.0
    for (q, t), r in zip(freqs[:-1], rs[:-1]):
        bound = math.exp(-c * eps ** 4 / (R * r) ** 2)
        if q - bound > worst:
            worst, worst_se = q - bound, _binom_se(q, t)
    note = f"fitted c = {c:.4g}; frequencies " + ", ".join(f"{q:.3g}" for q, _ in freqs)
    return [_report("escape_prob", n, p, worst, worst_se, 0.0, "le", sum(t for _, t in freqs), stream, note)]


def _pair_norm_drift(params, stream, samples):
    p = float(params.get("p", 1.5))
    n = int(params.get("n", 64))
    r = float(params.get("r", 0.02))
    points = min(samples, int(params.get("points", 2000)))
    logn = math.log(n)
    gen = stream.generator()
    sch_r = LowPScheme(LpBall(p, n), r, logn, 1.0, strict=False)
    lo, hi = sch_r.pair_map.support
    k = n // 2
    X = np.abs(sample_lp_ball_latent(LpBall(p, n), gen, points)[0])
    # place every pair inside the bump support so that the whole map is active
    X[:, : 2 * k] = gen.uniform(lo, hi, (points, 2 * k))
    signs = gen.integers(0, 2, (points, k)) * 2.0 - 1.0
    base = (np.abs(X) ** p).sum(axis=1)
    d_full = np.abs((np.abs(apply_scheme(sch_r, X, signs)) ** p).sum(axis=1) - base)
    sch_h = LowPScheme(LpBall(p, n), r / 2.0, logn, 1.0, strict=False)
    d_half = np.abs((np.abs(apply_scheme(sch_h, X, signs)) ** p).sum(axis=1) - base)
    a, sa = _mean_se(d_full)
    b, sb = _mean_se(d_half)
    ratio = a / b
    # the two means share samples, so the independent-sample error overstates the spread
    se = _ratio_se(a, sa, b, sb)
    return [_report("pair_norm_drift", n, p, ratio, se, (3.5, 4.5), "band", points, stream,
                    "mean | |y|_p^p - |x|_p^p | at r over r/2")]


CheckFn = Callable[[dict, RandomStream, int], list]

CATALOG: dict[str, CheckFn] = {
    "cov_squares": _cov_squares,
    "coord_l2": _coord_l2,
    "phi_mean": _phi_mean,
    "phi_cov": _phi_cov,
    "var_norm": _var_norm,
    "gauss_tail": _gauss_tail,
    "gauss_tv": _gauss_tv,
    "exp_moments": _exp_moments,
    "exp_var": _exp_var,
    "bernstein_shell": _bernstein_shell,
    "highp_sets": _highp_sets,
    "escape_prob": _escape_prob,
    "pair_norm_drift": _pair_norm_drift,
}

# (claim, params) runs performed by ``verify all``
DEFAULT_RUNS: list[tuple[str, dict]] = [
    ("cov_squares", {"p": 3.0, "n": 4}),
    ("cov_squares", {"p": math.inf, "n": 4}),
    ("coord_l2", {"p": 3.0, "n": 256}),
    ("phi_mean", {"p": 3.0, "n": 64}),
    ("phi_cov", {"p": 3.0, "n": 16, "R": 3.0}),
    ("var_norm", {"p": 1.0, "n": 4096, "samples": 20000}),
    ("var_norm", {"p": 4.0, "n": 4096, "samples": 20000}),
    ("var_norm", {"p": math.inf, "n": 4096, "samples": 20000}),
    ("gauss_tail", {"n": 16}),
    ("gauss_tv", {"n": 256}),
    ("exp_moments", {"p": 2.0}),
    ("exp_var", {"p": 2.0}),
    ("bernstein_shell", {"n": 256}),
    ("highp_sets", {"p": 3.0, "n": 512}),
    ("escape_prob", {"p": 3.0, "n": 512}),
    ("pair_norm_drift", {"p": 1.5, "n": 64}),
]


def check_claim(claim: str, params: Optional[dict] = None, stream: Optional[RandomStream] = None) -> list:
    """Run one check of the catalog and return its report rows.

    ``params`` may set ``samples`` (default 10^5) and claim-specific keys;
    the same (claim, params, stream) always yields the same reports.
    """
    if claim not in CATALOG:
        raise UnknownClaimError(claim)
    params = dict(params or {})
    samples = int(params.pop("samples", DEFAULT_SAMPLES))
    st = stream if stream is not None else RandomStream(0)
    return CATALOG[claim](params, st, samples)


def run_all(stream: RandomStream, runs=None) -> list:
    """Every default run, each on its own substream."""
    out = []
    for j, (claim, params) in enumerate(runs or DEFAULT_RUNS):
        out.extend(check_claim(claim, params, stream.split(j)))
    return out


__all__ = [
    "CheckReport",
    "CATALOG",
    "DEFAULT_RUNS",
    "UnknownClaimError",
    "check_claim",
    "run_all",
    "verdict",
    "marginal_density_at_zero",
    "var_norm_formula",
    "write_csv",
]
