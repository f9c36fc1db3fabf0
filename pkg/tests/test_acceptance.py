"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one ``ACn PASS`` or ``ACn FAIL`` line per criterion (and
per named sub-check) and repeats them in the terminal summary.  The scaling
ladders are slow on one core; ``pytest -m "not slow"`` skips them.
"""

import dataclasses
import io
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import ACCEPTANCE_LINES
from longlines.cli import main as cli_main
from longlines.config import ExperimentConfig
from longlines.core import LpBall, kappa, phi_bump
from longlines.diagnostics import check_claim
from longlines.finder import default_params, find_long_line
from longlines.linemeasure import sup_line_search, tangent_seeds
from longlines.perturb import (
    HighPScheme,
    PairMap,
    density_1d_perturbed,
    density_highp,
    g_of,
    g_pair,
    gaussian_tv,
    highp_coordinate_mean,
    pair_jacobian_mean,
    tv_estimate,
)
from longlines.rng import RandomStream
from longlines.samplers import gaussian_component, gaussian_product, sample_exp_power, sample_lp_ball, sample_simplex
from longlines.scaling import run_point, run_scaling
from longlines.sets import (
    body_l2_shell,
    box_set,
    hybrid_shell,
    mc_volume,
    product_norm_shell,
    striped_cube_shell,
    striped_subset,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
LADDER = (64, 128, 256, 512, 1024, 2048, 4096)


def record(label, ok, detail):
    line = f"{label} {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return ok


def _config(name, **changes):
    cfg = ExperimentConfig.from_file(CONFIGS / name)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _ladder_slopes(name):
    t0 = time.perf_counter()
    cfg = _config(name)
    assert cfg.n_values == LADDER
    rec = run_scaling(cfg)
    assert all(not pt.error for pt in rec.points)
    return rec.lower_fit.slope, rec.upper_fit.slope, time.perf_counter() - t0


def _band(value, centre, half):
    return abs(value - centre) <= half


# ----------------------------------------------------------------------------
# 1-4: exponents of the scaling ladders
# ----------------------------------------------------------------------------


@pytest.mark.slow
def test_ac1_cube_exponent():
    lo, up, secs = _ladder_slopes("cube.cfg")
    ok = _band(lo, 0.25, 0.07) and _band(up, 0.25, 0.07)
    record("AC1", ok, f"cube slopes lower {lo:.4f} upper {up:.4f} (target 0.25 +- 0.07), {secs:.0f} s")
    assert ok


@pytest.mark.slow
def test_ac2_p4_exponent():
    lo, up, secs = _ladder_slopes("p4.cfg")
    ok = _band(lo, 1 / 9, 0.05) and _band(up, 1 / 9, 0.05)
    record("AC2", ok, f"p=4 slopes lower {lo:.4f} upper {up:.4f} (target 0.1111 +- 0.05), {secs:.0f} s")
    assert ok


@pytest.mark.slow
def test_ac3_p2_flat():
    lo, up, secs = _ladder_slopes("p2.cfg")
    ok = _band(lo, 0.0, 0.05) and _band(up, 0.0, 0.05)
    record("AC3", ok, f"p=2 slopes lower {lo:.4f} upper {up:.4f} (target 0 +- 0.05), {secs:.0f} s")
    assert ok


@pytest.mark.slow
def test_ac4_mixture_exponent():
    lo, up, secs = _ladder_slopes("mixture.cfg")
    ok = _band(lo, 0.5, 0.07)
    record("AC4", ok, f"mixture lower slope {lo:.4f} (target 0.5 +- 0.07; upper {up:.4f}), {secs:.0f} s")
    assert ok


# ----------------------------------------------------------------------------
# 5: linear law in the mass
# ----------------------------------------------------------------------------


@pytest.mark.slow
def test_ac5_linear_in_mass():
    per_a = {}
    for a in (0.125, 0.25, 0.5):
        cfg = _config("gaussian_a.cfg", a=a, n_values=(1024,))
        pt = run_point(cfg, 1024, measure_mass=False)
        assert not pt.error
        per_a[a] = pt.lower_len / a
    spread = max(per_a.values()) / min(per_a.values()) - 1
    ok = spread <= 0.20
    detail = ", ".join(f"a={a:g}: L/a={v:.4f}" for a, v in per_a.items())
    record("AC5", ok, f"{detail}; spread {spread:.3f} (limit 0.20)")
    assert ok


# ----------------------------------------------------------------------------
# 6: total variation
# ----------------------------------------------------------------------------


def test_ac6_total_variation():
    n = 256
    tv = gaussian_tv(n, 0.5 * n ** -0.25)
    ok_a = record("AC6a", tv < 0.1, f"Gaussian quadrature TV {tv:.5f} (limit 0.1)")
    scheme = default_params(3.0, 512)
    assert isinstance(scheme, HighPScheme) and scheme.strict
    est = tv_estimate(scheme, 2000, RandomStream(61))
    ok_b = record("AC6b", est.value <= 0.25 + 3 * est.stderr,
                  f"high-p TV {est.value:.5f} +- {est.stderr:.5f} at n=512, p=3 (limit 0.25 + 3 sigma)")
    record("AC6", ok_a and ok_b, "both parts")
    assert ok_a and ok_b


# ----------------------------------------------------------------------------
# 7: density correctness
# ----------------------------------------------------------------------------


def _highp_plane_mass():
    ball = LpBall(3.0, 2)
    s = HighPScheme(ball, 0.15, 1.5, strict=False)
    L = ball.kappa + s.r + 1e-3
    m = 1200
    c = -L + (np.arange(m) + 0.5) * (2 * L / m)
    X, Y = np.meshgrid(c, c)
    dens = density_highp(s, np.stack([X.ravel(), Y.ravel()], axis=1))
    return float(dens.sum()) * (2 * L / m) ** 2


def _one_d_mass():
    comp = gaussian_component()
    phi = phi_bump()
    worst = 0.0
    for R in (0.0, 0.6):
        mass, _ = integrate.quad(lambda t: float(density_1d_perturbed(comp, 0.9, R, phi, t)), -12, 12,
                                 points=[-1 / 3, 1 / 3], epsabs=1e-13, epsrel=1e-12, limit=400)
        worst = max(worst, abs(mass - 1.0))
    return worst


def _one_d_ratios():
    comp = gaussian_component()
    phi = phi_bump()
    t = np.array([-0.2, -0.05, 0.1, 0.25])
    g = g_of(comp, phi, t)

    def resid(r):
        return np.log(density_1d_perturbed(comp, r, 0.0, phi, t)) - np.log(comp.density(t)) - 0.5 * r * r * g

    return resid(0.8) / resid(0.4)


def _coordinate_ratios():
    ball = LpBall(3.0, 8)
    y = np.array([0.6, 0.7, 0.8, 0.9])
    res = []
    for r in (0.025, 0.0125):
        mean, g = highp_coordinate_mean(HighPScheme(ball, r, 2.0, strict=False), y)
        res.append(mean - 1 - g)
    return res[0] / res[1]


def _pair_ratios():
    pm = PairMap(1.5, 0.02, 2.0, 0.3)
    lo, hi = pm.support
    gen = np.random.default_rng(71)
    y1, y2 = gen.uniform(lo, hi, 8), gen.uniform(lo, hi, 8)
    res = []
    for p in (pm, pm.with_r(0.01)):
        res.append(pair_jacobian_mean(p, y1, y2) - 1 - g_pair(p, y1, y2))
    return res[0] / res[1]


def test_ac7_density_correctness():
    mass = _highp_plane_mass()
    ok1 = record("AC7a", abs(mass - 1) < 1e-3, f"high-p density mass in the plane {mass:.6f} (tolerance 1e-3)")
    err = _one_d_mass()
    ok2 = record("AC7b", err < 1e-8, f"one-dimensional density mass error {err:.2e} (limit 1e-8)")
    r1 = _one_d_ratios()
    r2 = _coordinate_ratios()
    ok3 = record("AC7c", bool(np.all((r1 >= 12) & (r1 <= 20)) and np.all((r2 >= 12) & (r2 <= 20))),
                 f"residual ratios 1-D {np.round(r1, 2).tolist()}, coordinate {np.round(r2, 2).tolist()} "
                 "(band [12, 20])")
    rp = _pair_ratios()
    ok4 = record("AC7d", bool(np.all((rp >= 6) & (rp <= 10))),
                 f"pair expansion residual ratios {np.round(rp, 2).tolist()} (band [6, 10])")
    record("AC7", ok1 and ok2 and ok3 and ok4, "all four parts")
    assert ok1 and ok2 and ok3 and ok4


# ----------------------------------------------------------------------------
# 8: sampler exactness
# ----------------------------------------------------------------------------


def _rejection(contains, lo, hi, count, gen):
    out, have = [], 0
    while have < count:
        cand = gen.uniform(lo, hi, (2 * count, 2))
        keep = cand[contains(cand)]
        out.append(keep)
        have += keep.shape[0]
    return np.concatenate(out)[:count]


def _chi2_pvalue(a, b, lo, hi, bins=10):
    edges = np.linspace(lo, hi, bins + 1)
    ha, _, _ = np.histogram2d(a[:, 0], a[:, 1], bins=[edges, edges])
    hb, _, _ = np.histogram2d(b[:, 0], b[:, 1], bins=[edges, edges])
    table = np.stack([ha.ravel(), hb.ravel()])
    table = table[:, table.sum(axis=0) > 0]
    return stats.chi2_contingency(table)[1]


def test_ac8_sampler_exactness():
    m = 100_000
    oks = []
    pvals = {}
    for p in (1.0, 3.0):
        ball = LpBall(p, 2)
        k = ball.kappa
        ours = sample_lp_ball(ball, RandomStream(81, (int(p),)), m)
        oracle = _rejection(ball.contains, -k, k, m, np.random.default_rng(82 + int(p)))
        pvals[f"B_{p:g}"] = _chi2_pvalue(ours, oracle, -k, k)
    k1 = kappa(1.0, 2)
    ours = sample_simplex(2, RandomStream(84), m)
    oracle = _rejection(lambda z: z[:, 0] + z[:, 1] <= k1, 0.0, k1, m, np.random.default_rng(85))
    pvals["simplex"] = _chi2_pvalue(ours, oracle, 0.0, k1)
    ok = all(v > 1e-3 for v in pvals.values())
    oks.append(record("AC8a", ok, "chi-square p-values " + ", ".join(f"{k} {v:.3g}" for k, v in pvals.items())
                      + " (level 1e-3)"))
    parts = []
    ok = True
    for p in (1.0, 2.0, 3.0, 4.0):
        v = np.abs(sample_exp_power(p, RandomStream(86, (int(p),)), 400_000)) ** p
        mean, se_m = v.mean(), v.std(ddof=1) / math.sqrt(v.size)
        c = v - mean
        var = np.mean(c * c)
        se_v = math.sqrt(max(np.mean(c ** 4) - var * var, 0.0) / v.size)
        ok &= abs(mean - 1 / p) <= 3 * se_m and abs(var - 1 / p) <= 3 * se_v
        parts.append(f"p={p:g}: mean {mean:.5f} var {var:.5f} (1/p = {1 / p:.5f})")
    oks.append(record("AC8b", bool(ok), "; ".join(parts) + " (3 sigma)"))
    record("AC8", all(oks), "both parts")
    assert all(oks)


# ----------------------------------------------------------------------------
# 9: variance law
# ----------------------------------------------------------------------------


def test_ac9_variance_law():
    oks = []
    for p in (1.0, 4.0):
        (rep,) = check_claim("var_norm", {"p": p, "n": 4096, "samples": 20000}, RandomStream(91, (int(p),)))
        oks.append(record(f"AC9 p={p:g}", abs(rep.estimate - 1) <= 0.10,
                          f"Var(|X|^2)/(n a_n^4) over the formula = {rep.estimate:.4f} (within 10%)"))
    (rep,) = check_claim("var_norm", {"p": math.inf, "n": 4096, "samples": 20000}, RandomStream(93))
    oks.append(record("AC9 p=inf", abs(rep.estimate - 4096 / 180) <= 3 * rep.stderr,
                      f"Var(|X|^2) = {rep.estimate:.4f} +- {rep.stderr:.4f} vs n/180 = {4096 / 180:.4f}"))
    record("AC9", all(oks), "all three exponents")
    assert all(oks)


# ----------------------------------------------------------------------------
# 10: claim suite
# ----------------------------------------------------------------------------


@pytest.mark.slow
def test_ac10_verify_all():
    out = io.StringIO()
    t0 = time.perf_counter()
    code = cli_main(["verify", "--claim", "all"], out)
    secs = time.perf_counter() - t0
    rows = out.getvalue().splitlines()[1:]
    fails = [r for r in rows if ",fail," in r]
    verdicts = {v: sum(f",{v}," in r for r in rows) for v in ("pass", "inconclusive", "fail")}
    ok = code == 0 and not fails and secs <= 600
    record("AC10", ok, f"verify all: {verdicts} in {secs:.0f} s (no fail, limit 600 s)")
    assert ok


# ----------------------------------------------------------------------------
# 11: shell upper bounds
# ----------------------------------------------------------------------------


def _normalized_maxima(kind):
    vals = []
    for n in LADDER:
        st = RandomStream(23).split(n)
        if kind == "product":
            A = product_norm_shell(gaussian_product(n), 0.5, st.split(0))
            rate = n ** 0.25
        else:
            A = hybrid_shell(4.0, n, st.split(0), scale=2.5)
            rate = n ** (1 / 9)
        _, res = sup_line_search(A, 10_000, st.split(2), seeds=tangent_seeds(A, 50, st.split(3)))
        vals.append(res.length / rate)
    return vals


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["product", "hybrid"])
def test_ac11_shell_upper_bounds(kind):
    vals = _normalized_maxima(kind)
    spread = max(vals) / min(vals) - 1
    ok = spread < 0.25
    record(f"AC11 {kind}", ok, f"normalized maxima {np.round(vals, 4).tolist()}; spread {spread:.3f} (limit 0.25)")
    assert ok


# ----------------------------------------------------------------------------
# 12: striped shells
# ----------------------------------------------------------------------------


def test_ac12a_striped_square():
    st = RandomStream(5)
    B = striped_cube_shell(2, 0.5, 0.02, 1e-4, st.split(0))
    Q = box_set(1.0, 2.0, 2)
    vol, se = mc_volume(B, st.split(1), 10 ** 5)
    ok_vol = record("AC12a vol", vol >= 0.5 - 3 * se, f"Vol(B) {vol:.4f} +- {se:.4f} (limit 0.5 - 3 sigma)")
    gen = st.split(2).generator()
    a = gen.uniform(1, 2, (1000, 2))
    b = gen.uniform(1, 2, (1000, 2))
    excess = B.line_lengths(a, b - a) - 0.5 * Q.line_lengths(a, b - a)
    worst = float(excess.max())
    ok_lines = record("AC12a lines", worst <= 0.02,
                      f"max |l n B| - lam |l n Q| = {worst:.4f} over 1000 lines, "
                      f"{int((excess > 0.02).sum())} above 0.02 (limit 0.02)")
    assert ok_vol and ok_lines


@pytest.mark.slow
def test_ac12b_superadditivity_pattern():
    n = 256
    st = RandomStream(12)
    base = body_l2_shell(LpBall(math.inf, n), st.split(0), target=0.5)
    _, up = sup_line_search(base, 200, st.split(1), seeds=tangent_seeds(base, 50, st.split(4)))
    upper = up.length
    oks, parts = [], []
    for j, a in enumerate((0.125, 0.25)):
        B = striped_subset(base, 2 * a, 1e-4, st.split(2, j), k=8)
        cert = find_long_line(B, default_params("cube", n, a), 200, stream=st.split(3, j))
        oks.append(cert.certified_length <= 4 * a * upper)
        parts.append(f"a={a:g}: lower {cert.certified_length:.4f} vs 4a*upper {4 * a * upper:.4f}")
    ok = all(oks)
    record("AC12b", ok, "; ".join(parts) + f" (upper_len(1/2) = {upper:.4f})")
    assert ok
