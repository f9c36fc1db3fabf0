"""Witness sets given by membership oracles, ambient samplers and exact
line intersectors.

Intersectors work on batches of lines ``x0 + t d`` and return two arrays
``(lo, hi)`` of shape ``(m, k)``: row ``j`` lists up to ``k`` sorted,
disjoint parameter intervals ``[lo, hi]`` on line ``j``; padding entries have
``hi <= lo`` and are ignored.  Lengths in Euclidean units are the interval
widths times ``|d|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from longlines.core import LpBall, kappa, lp_norm_pow
from longlines.rng import RandomStream, as_generator
from longlines.samplers import (
    ProductMeasure,
    sample_lp_ball,
    sample_product,
)

BISECT_RTOL = 1e-10
CALIBRATION_SAMPLES = 10 ** 5
MOMENT_SAMPLES = 10 ** 6
_CHUNK_ENTRIES = 1 << 20


class CalibrationError(RuntimeError):
    """The requested mass cannot be reached by tuning the free constant."""


Intersector = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class SeparableBand:
    """A set of the form {lo <= sum_i f(x_i) <= hi} (possibly cut by a body).

    ``value``, ``deriv`` and ``second`` evaluate f, f' and f'' elementwise.
    Line searches use this to build near-tangent candidate lines.
    """

    value: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    deriv: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    second: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lo: float
    hi: float


def _square_band(lo: float, hi: float) -> SeparableBand:
    return SeparableBand(lambda x: x * x, lambda x: 2.0 * x, lambda x: np.full_like(x, 2.0), lo, hi)


def _power_band(p: float, lo: float, hi: float) -> SeparableBand:
    def second(x):
        a = np.abs(x)
        return p * (p - 1.0) * np.where(a > 0, a, np.finfo(float).tiny) ** (p - 2.0)

    return SeparableBand(lambda x: np.abs(x) ** p, lambda x: p * np.sign(x) * np.abs(x) ** (p - 1.0),
                         second, lo, hi)


@dataclass(frozen=True)
class MembershipSet:
    """A measurable subset of R^n.

    :param contains_fn: maps an ``(m, n)`` array to a boolean array of length m
    :param ambient: ``ambient(stream, size)`` draws from the reference measure
    :param intersector: optional batch intersector (see module docstring)
    :param descriptor: kind, parameters and calibrated constants
    """

    n: int
    contains_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    descriptor: dict
    ambient: Optional[Callable] = field(default=None, repr=False)
    intersector: Optional[Intersector] = field(default=None, repr=False)
    band: Optional[SeparableBand] = field(default=None, repr=False)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return bool(self.contains_fn(x[None, :])[0])
        return np.asarray(self.contains_fn(x), dtype=bool)

    @property
    def has_intersector(self) -> bool:
        return self.intersector is not None

    def batch_intervals(self, X0, D):
        if self.intersector is None:
            raise ValueError("set has no exact intersector")
        X0 = np.atleast_2d(np.asarray(X0, dtype=float))
        D = np.atleast_2d(np.asarray(D, dtype=float))
        return _chunked(self.intersector, X0, D)

    def intervals(self, x0, d) -> np.ndarray:
        """Sorted disjoint ``(k, 2)`` array of parameter intervals on one line."""
        lo, hi = self.batch_intervals(np.asarray(x0)[None, :], np.asarray(d)[None, :])
        keep = hi[0] > lo[0]
        return np.stack([lo[0][keep], hi[0][keep]], axis=1)

    def line_lengths(self, X0, D, t_lo=None, t_hi=None) -> np.ndarray:
        """Euclidean length of each line's intersection, optionally clipped."""
        lo, hi = self.batch_intervals(X0, D)
        if t_lo is not None:
            lo = np.maximum(lo, np.asarray(t_lo, dtype=float).reshape(-1, 1))
        if t_hi is not None:
            hi = np.minimum(hi, np.asarray(t_hi, dtype=float).reshape(-1, 1))
        widths = np.clip(hi - lo, 0.0, None).sum(axis=1)
        return widths * np.linalg.norm(np.atleast_2d(D), axis=1)

    def sample_ambient(self, stream, size: int) -> np.ndarray:
        if self.ambient is None:
            raise ValueError("set has no ambient sampler")
        return self.ambient(stream, size)

    def with_descriptor(self, **extra) -> "MembershipSet":
        return replace(self, descriptor={**self.descriptor, **extra})


def _chunked(fn: Intersector, X0: np.ndarray, D: np.ndarray):
    m, n = X0.shape
    step = max(1, _CHUNK_ENTRIES // max(n, 1))
    if m <= step:
        return fn(X0, D)
    los, his = [], []
    width = 0
    for s in range(0, m, step):
        lo, hi = fn(X0[s:s + step], D[s:s + step])
        los.append(lo)
        his.append(hi)
        width = max(width, lo.shape[1])
    lo_all = np.zeros((m, width))
    hi_all = np.zeros((m, width))
    row = 0
    for lo, hi in zip(los, his):
        r = lo.shape[0]
        lo_all[row:row + r, :lo.shape[1]] = lo
        hi_all[row:row + r, :hi.shape[1]] = hi
        row += r
    return lo_all, hi_all


def mc_volume(A: MembershipSet, stream, samples: int = CALIBRATION_SAMPLES, chunk: int = 4096):
    """Monte Carlo mass of ``A`` under its ambient measure: (estimate, stderr)."""
    hits = 0
    done = 0
    for j, s in enumerate(range(0, samples, chunk)):
        size = min(chunk, samples - s)
        sub = stream.split(j) if isinstance(stream, RandomStream) else stream
        pts = A.sample_ambient(sub, size)
        hits += int(np.count_nonzero(A.contains(pts)))
        done += size
    est = hits / done
    return est, math.sqrt(max(est * (1 - est), 1e-300) / done)


# ----------------------------------------------------------------------------
# interval primitives
# ----------------------------------------------------------------------------


def _quadratic_coeffs(X0, D):
    a = np.einsum("ij,ij->i", D, D)
    b = np.einsum("ij,ij->i", X0, D)
    c = np.einsum("ij,ij->i", X0, X0)
    return a, b, c


def _quadratic_sublevel(a, b, c, level):
    """{t : a t^2 + 2 b t + c <= level} as (lo, hi, nonempty)."""
    cc = c - level
    disc = b * b - a * cc
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    q = -(b + np.where(b >= 0, sq, -sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(q != 0, q / a, 0.0)
        r2 = np.where(q != 0, cc / q, 0.0)
    lo = np.minimum(r1, r2)
    hi = np.maximum(r1, r2)
    return lo, hi, ok & (hi > lo)


def _slab_interval(X0, D, M):
    """{t : |x0_i + t d_i| <= M for all i}."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-M - X0) / D
        t2 = (M - X0) / D
    flat = D == 0
    inside_flat = np.abs(X0) <= M
    low = np.where(flat, np.where(inside_flat, -np.inf, np.inf), np.minimum(t1, t2))
    high = np.where(flat, np.where(inside_flat, np.inf, -np.inf), np.maximum(t1, t2))
    lo = low.max(axis=1)
    hi = high.min(axis=1)
    return lo, hi, hi > lo


def _bisect(pred, lo, hi, active):
    """Shrink [lo, hi] keeping pred(lo) True and pred(hi) False."""
    lo = lo.copy()
    hi = hi.copy()
    scale = np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
    for _ in range(200):
        todo = active & (hi - lo > BISECT_RTOL * scale)
        if not np.any(todo):
            break
        mid = 0.5 * (lo + hi)
        left = pred(mid)
        lo = np.where(todo & left, mid, lo)
        hi = np.where(todo & ~left, mid, hi)
    return lo, hi


def _convex_min(slope, tlo, thi, ok):
    """Minimizer of a convex function on [tlo, thi] by bisection on its slope."""
    lo = np.where(ok, tlo, 0.0)
    hi = np.where(ok, thi, 0.0)
    s_lo = slope(lo)
    s_hi = slope(hi)
    at_lo = ok & (s_lo >= 0)
    at_hi = ok & (s_hi <= 0) & ~at_lo
    inner = ok & ~at_lo & ~at_hi
    a, b = _bisect(lambda t: slope(t) < 0, lo, hi, inner)
    tmin = np.where(at_lo, lo, np.where(at_hi, hi, 0.5 * (a + b)))
    return tmin


def _convex_sublevel(value, tmin, level, tlo, thi, ok):
    """{t in [tlo, thi] : value(t) <= level} given the minimizer ``tmin``."""
    tlo = np.where(ok, tlo, 0.0)
    thi = np.where(ok, thi, 0.0)
    vmin = value(tmin)
    nonempty = ok & (vmin <= level)
    v_lo = value(tlo)
    v_hi = value(thi)
    need_left = nonempty & (v_lo > level)
    need_right = nonempty & (v_hi > level)
    # left crossing: pred True on the outside part (value above level)
    _, left_in = _bisect(lambda t: value(t) > level, tlo, tmin, need_left)
    right_in, _ = _bisect(lambda t: value(t) <= level, tmin, thi, need_right)
    a = np.where(need_left, left_in, tlo)
    b = np.where(need_right, right_in, thi)
    return a, b, nonempty


def _band(o_lo, o_hi, o_ok, h_lo, h_hi, h_ok):
    """[o_lo, o_hi] minus the open hole (h_lo, h_hi), as two intervals per row."""
    lo1 = o_lo
    hi1 = np.where(h_ok, np.minimum(o_hi, h_lo), o_hi)
    lo2 = np.where(h_ok, np.maximum(o_lo, h_hi), 0.0)
    hi2 = np.where(h_ok, o_hi, 0.0)
    ok1 = o_ok & (hi1 > lo1)
    ok2 = o_ok & h_ok & (hi2 > lo2)
    lo = np.stack([np.where(ok1, lo1, 0.0), np.where(ok2, lo2, 0.0)], axis=1)
    hi = np.stack([np.where(ok1, hi1, 0.0), np.where(ok2, hi2, 0.0)], axis=1)
    return lo, hi


def _empty_hole(m):
    z = np.zeros(m)
    return z, z, np.zeros(m, dtype=bool)


class _LineFamily:
    """Evaluates separable convex sums along a batch of lines."""

    def __init__(self, X0, D):
        self.X0 = X0
        self.D = D

    def pts(self, t):
        return self.X0 + t[:, None] * self.D

    def sum_of(self, f):
        return lambda t: f(self.pts(t)).sum(axis=1)

    def slope_of(self, df):
        return lambda t: (df(self.pts(t)) * self.D).sum(axis=1)


def _lp_funcs(p):
    if math.isinf(p):
        raise ValueError("use slabs for p = inf")

    def f(x):
        return np.abs(x) ** p

    def df(x):
        return p * np.sign(x) * np.abs(x) ** (p - 1.0)

    return f, df


def _body_interval(ball: LpBall, X0, D, fam: _LineFamily):
    """Parameter interval of the line inside the volume-one l_p ball."""
    k = ball.kappa
    tlo, thi, ok = _slab_interval(X0, D, k if not ball.is_cube else 0.5)
    if ball.is_cube:
        return tlo, thi, ok
    f, df = _lp_funcs(ball.p)
    value = fam.sum_of(f)
    tmin = _convex_min(fam.slope_of(df), tlo, thi, ok)
    return _convex_sublevel(value, tmin, k ** ball.p, tlo, thi, ok)


def _binary_search_constant(stats: np.ndarray, target: float, iters: int = 100) -> float:
    """Smallest constant C with mean(stats <= C) >= target, by bisection."""
    stats = np.asarray(stats, dtype=float)
    if target > 1.0 or target <= 0.0:
        raise CalibrationError(f"mass target {target} is outside (0, 1]")
    srt = np.sort(stats)
    need = math.ceil(target * srt.size - 1e-9)
    if need > srt.size:
        raise CalibrationError("mass target unreachable")
    lo, hi = 0.0, max(float(srt[-1]), 1e-12)
    if float(np.mean(stats <= lo)) >= target:
        return 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.count_nonzero(stats <= mid) >= need:
            hi = mid
        else:
            lo = mid
    return hi


def _stream(stream) -> RandomStream:
    if stream is None:
        return RandomStream(0)
    if isinstance(stream, RandomStream):
        return stream
    raise TypeError("calibration needs a RandomStream")


def _chunked_stat(sampler, stat, stream: RandomStream, samples: int, n: int) -> np.ndarray:
    step = max(1, min(samples, (1 << 22) // max(n, 1)))
    out = []
    for j, s in enumerate(range(0, samples, step)):
        pts = sampler(stream.split(j), min(step, samples - s))
        out.append(stat(pts))
    return np.concatenate(out)


# ----------------------------------------------------------------------------
# Euclidean shells and balls
# ----------------------------------------------------------------------------


def _euclid_shell_intersector(r_lo: float, r_hi: float):
    def inter(X0, D):
        a, b, c = _quadratic_coeffs(X0, D)
        o_lo, o_hi, o_ok = _quadratic_sublevel(a, b, c, r_hi * r_hi)
        if r_lo > 0:
            h_lo, h_hi, h_ok = _quadratic_sublevel(a, b, c, r_lo * r_lo)
        else:
            h_lo, h_hi, h_ok = _empty_hole(a.size)
        return _band(o_lo, o_hi, o_ok, h_lo, h_hi, h_ok)

    return inter


def euclidean_shell(r_lo: float, r_hi: float, n: int, ambient=None, descriptor=None) -> MembershipSet:
    """The annulus {r_lo <= |x| <= r_hi} in R^n."""
    if not (0 <= r_lo < r_hi):
        raise ValueError("need 0 <= r_lo < r_hi")
    r_lo, r_hi = float(r_lo), float(r_hi)

    def contains(x):
        s = np.einsum("ij,ij->i", x, x)
        return (s >= r_lo * r_lo) & (s <= r_hi * r_hi)

    desc = {"kind": "euclidean-shell", "n": n, "r_lo": r_lo, "r_hi": r_hi}
    if descriptor:
        desc.update(descriptor)
    return MembershipSet(n, contains, desc, ambient, _euclid_shell_intersector(r_lo, r_hi),
                         _square_band(r_lo * r_lo, r_hi * r_hi))


def euclidean_ball_set(radius: float, n: int, ambient=None) -> MembershipSet:
    """The closed Euclidean ball of the given radius about the origin."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    radius = float(radius)

    def contains(x):
        return np.einsum("ij,ij->i", x, x) <= radius * radius

    return MembershipSet(
        n, contains, {"kind": "euclidean-ball", "n": n, "radius": radius}, ambient,
        _euclid_shell_intersector(0.0, radius),
    )


def ball_shell_construction(n: int) -> MembershipSet:
    """Shell K minus (1 - 1/n) K for K the Euclidean ball of volume one."""
    ball = LpBall(2.0, n)
    rad = ball.kappa
    return euclidean_shell(
        (1.0 - 1.0 / n) * rad, rad, n,
        ambient=lambda stream, size: sample_lp_ball(ball, stream, size),
        descriptor={"kind": "ball-shell", "radius": rad},
    )


def product_norm_shell(
    mu: ProductMeasure,
    eps: float,
    stream=None,
    C_hat: Optional[float] = None,
    moment_samples: int = MOMENT_SAMPLES,
    calib_samples: int = CALIBRATION_SAMPLES,
) -> MembershipSet:
    """Euclidean shell E -/+ C_hat sqrt|log eps| around E = sqrt(E|X|^2).

    E is estimated from ``moment_samples`` coordinate draws.  When ``C_hat``
    is omitted it is calibrated so that the shell holds mass >= 1 - eps.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    st = _stream(stream)
    n = mu.n
    per = max(1, moment_samples // n)
    pts = sample_product(mu, st.split(0), per)
    E = math.sqrt(float(np.mean(np.einsum("ij,ij->i", pts, pts))))
    scale = math.sqrt(abs(math.log(eps)))
    ambient = lambda s, size: sample_product(mu, s, size)
    if C_hat is None:
        stats = _chunked_stat(
            ambient, lambda x: np.abs(np.sqrt(np.einsum("ij,ij->i", x, x)) - E) / scale,
            st.split(1), calib_samples, n,
        )
        C_hat = _binary_search_constant(stats, 1.0 - eps)
    half = C_hat * scale
    r_lo = max(E - half, 0.0)
    r_hi = E + half
    if r_hi <= r_lo:
        r_hi = float(np.nextafter(r_lo, math.inf))
    return euclidean_shell(
        r_lo, r_hi, n, ambient=ambient,
        descriptor={"kind": "product-norm-shell", "eps": eps, "E": E, "C_hat": C_hat,
                    "measure": mu.descriptor(), "seed": st.label()},
    )


# ----------------------------------------------------------------------------
# shells inside l_p balls
# ----------------------------------------------------------------------------


def body_l2_shell(ball: LpBall, stream=None, C0: Optional[float] = None, target: float = 0.5,
                  calib_samples: int = CALIBRATION_SAMPLES) -> MembershipSet:
    """{x in B : | |x|^2 - E|X|^2 | <= C0 sqrt(n)} for B the volume-one l_p ball.

    E|X|^2 is estimated by Monte Carlo on the calibration sample.
    """
    st = _stream(stream)
    n = ball.n
    ambient = lambda s, size: sample_lp_ball(ball, s, size)
    sq = _chunked_stat(ambient, lambda x: np.einsum("ij,ij->i", x, x), st.split(0), calib_samples, n)
    E2 = float(np.mean(sq))
    if C0 is None:
        C0 = _binary_search_constant(np.abs(sq - E2) / math.sqrt(n), target)
    lo2 = max(E2 - C0 * math.sqrt(n), 0.0)
    hi2 = E2 + C0 * math.sqrt(n)

    def contains(x):
        s = np.einsum("ij,ij->i", x, x)
        return ball.contains(x) & (s >= lo2) & (s <= hi2)

    def inter(X0, D):
        fam = _LineFamily(X0, D)
        b_lo, b_hi, b_ok = _body_interval(ball, X0, D, fam)
        a, b, c = _quadratic_coeffs(X0, D)
        q_lo, q_hi, q_ok = _quadratic_sublevel(a, b, c, hi2)
        o_lo = np.maximum(b_lo, q_lo)
        o_hi = np.minimum(b_hi, q_hi)
        if lo2 > 0:
            h_lo, h_hi, h_ok = _quadratic_sublevel(a, b, c, lo2)
        else:
            h_lo, h_hi, h_ok = _empty_hole(a.size)
        return _band(o_lo, o_hi, b_ok & q_ok & (o_hi > o_lo), h_lo, h_hi, h_ok)

    desc = {"kind": "body-l2-shell", "p": ball.p, "n": n, "E2": E2, "C0": C0,
            "target": target, "seed": st.label()}
    return MembershipSet(n, contains, desc, ambient, inter, _square_band(lo2, hi2))


def lp_shell(p: float, n: int, stream=None, C0: Optional[float] = None, target: float = 0.5,
             calib_samples: int = CALIBRATION_SAMPLES) -> MembershipSet:
    """{x in B_p^n : ||x||_p^p >= kappa^p - C0, max|x_i| <= C0 log^(1/p) n}, 1 < p <= 2."""
    if not 1.0 < p <= 2.0:
        raise ValueError("lp_shell needs 1 < p <= 2")
    st = _stream(stream)
    ball = LpBall(p, n)
    kp = ball.kappa ** p
    logfac = math.log(n) ** (1.0 / p) if n > 1 else 1.0
    ambient = lambda s, size: sample_lp_ball(ball, s, size)
    if C0 is None:
        stats = _chunked_stat(
            ambient,
            lambda x: np.maximum(kp - lp_norm_pow(x, p), np.abs(x).max(axis=1) / logfac),
            st.split(0), calib_samples, n,
        )
        C0 = _binary_search_constant(stats, target)
    cap = C0 * logfac
    inner = kp - C0

    def contains(x):
        s = lp_norm_pow(x, p)
        return (s <= kp) & (s >= inner) & (np.abs(x).max(axis=1) <= cap)

    f, df = _lp_funcs(p)

    def inter(X0, D):
        fam = _LineFamily(X0, D)
        tlo, thi, ok = _slab_interval(X0, D, min(cap, ball.kappa))
        value = fam.sum_of(f)
        tmin = _convex_min(fam.slope_of(df), tlo, thi, ok)
        o_lo, o_hi, o_ok = _convex_sublevel(value, tmin, kp, tlo, thi, ok)
        if inner > 0:
            h_lo, h_hi, h_ok = _convex_sublevel(lambda t: value(t) - inner, tmin, 0.0, tlo, thi, o_ok)
            # the hole is open: value < inner; drop it when it has no interior
            h_ok = h_ok & (value(tmin) < inner)
        else:
            h_lo, h_hi, h_ok = _empty_hole(tlo.size)
        return _band(o_lo, o_hi, o_ok, h_lo, h_hi, h_ok)

    desc = {"kind": "lp-shell", "p": p, "n": n, "C0": C0, "target": target, "seed": st.label()}
    return MembershipSet(n, contains, desc, ambient, inter, _power_band(p, inner, kp))


@dataclass(frozen=True)
class HybridProfile:
    """Quadratic near zero, |r|^p beyond the breakpoint b; C^1 and convex."""

    p: float
    n: int
    breakpoint: float

    @classmethod
    def standard(cls, p: float, n: int, scale: float = 1.0) -> "HybridProfile":
        """Breakpoint n^(-1/(2p+1)) / scale."""
        return cls(p, n, n ** (-1.0 / (2.0 * p + 1.0)) / scale)

    def value(self, r):
        p, b = self.p, self.breakpoint
        a = np.abs(r)
        quad = 0.5 * p * b ** (p - 2.0) * a * a + (1.0 - 0.5 * p) * b ** p
        return np.where(a <= b, quad, a ** p)

    def deriv(self, r):
        p, b = self.p, self.breakpoint
        a = np.abs(r)
        return np.where(a <= b, p * b ** (p - 2.0) * r, p * np.sign(r) * a ** (p - 1.0))

    def second(self, r):
        p, b = self.p, self.breakpoint
        a = np.abs(r)
        return np.where(a <= b, p * b ** (p - 2.0), p * (p - 1.0) * a ** (p - 2.0))


def hybrid_shell(p: float, n: int, stream=None, C0: Optional[float] = None, scale: float = 1.0,
                 target: float = 0.5, moment_samples: int = MOMENT_SAMPLES,
                 calib_samples: int = CALIBRATION_SAMPLES) -> MembershipSet:
    """{x in B_p^n : |sum h(x_i) - E| <= C0} with the hybrid profile h, p > 2."""
    if not p > 2.0 or math.isinf(p):
        raise ValueError("hybrid_shell needs 2 < p < inf")
    st = _stream(stream)
    ball = LpBall(p, n)
    prof = HybridProfile.standard(p, n, scale)
    ambient = lambda s, size: sample_lp_ball(ball, s, size)
    per = max(1, moment_samples // n)
    E = n * float(np.mean(prof.value(sample_lp_ball(ball, st.split(0), per))))
    if C0 is None:
        stats = _chunked_stat(
            ambient, lambda x: np.abs(prof.value(x).sum(axis=1) - E), st.split(1), calib_samples, n,
        )
        C0 = _binary_search_constant(stats, target)
    kp = ball.kappa ** p

    def contains(x):
        s = prof.value(x).sum(axis=1)
        return (lp_norm_pow(x, p) <= kp) & (np.abs(s - E) <= C0)

    def inter(X0, D):
        fam = _LineFamily(X0, D)
        b_lo, b_hi, b_ok = _body_interval(ball, X0, D, fam)
        value = fam.sum_of(prof.value)
        tmin = _convex_min(fam.slope_of(prof.deriv), b_lo, b_hi, b_ok)
        o_lo, o_hi, o_ok = _convex_sublevel(value, tmin, E + C0, b_lo, b_hi, b_ok)
        h_lo, h_hi, h_ok = _convex_sublevel(value, tmin, E - C0, b_lo, b_hi, o_ok)
        h_ok = h_ok & (value(tmin) < E - C0)
        return _band(o_lo, o_hi, o_ok, h_lo, h_hi, h_ok)

    desc = {"kind": "hybrid-shell", "p": p, "n": n, "E": E, "C0": C0, "scale": scale,
            "breakpoint": prof.breakpoint, "target": target, "seed": st.label()}
    band = SeparableBand(prof.value, prof.deriv, prof.second, E - C0, E + C0)
    return MembershipSet(n, contains, desc, ambient, inter, band)


# ----------------------------------------------------------------------------
# cubes and radial stripes
# ----------------------------------------------------------------------------


def box_set(lo: float, hi: float, n: int) -> MembershipSet:
    """The cube [lo, hi]^n with its uniform law as ambient measure."""
    lo, hi = float(lo), float(hi)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)

    def contains(x):
        return np.all((x >= lo) & (x <= hi), axis=1)

    def inter(X0, D):
        a, b, ok = _slab_interval(X0 - mid, D, half)
        return np.where(ok, a, 0.0)[:, None], np.where(ok, b, 0.0)[:, None]

    ambient = lambda s, size: as_generator(s).uniform(lo, hi, (int(size), n))
    return MembershipSet(n, contains, {"kind": "box", "n": n, "lo": lo, "hi": hi}, ambient, inter)


def full_space(n: int) -> MembershipSet:
    def inter(X0, D):
        m = X0.shape[0]
        return np.full((m, 1), -1e300), np.full((m, 1), 1e300)

    return MembershipSet(n, lambda x: np.ones(x.shape[0], dtype=bool), {"kind": "full", "n": n}, None, inter)


def empty_set(n: int) -> MembershipSet:
    def inter(X0, D):
        m = X0.shape[0]
        return np.zeros((m, 1)), np.zeros((m, 1))

    return MembershipSet(n, lambda x: np.zeros(x.shape[0], dtype=bool), {"kind": "empty", "n": n}, None, inter)


@dataclass(frozen=True)
class StripeRule:
    """Radial stripe pattern: radius index J = floor(rho / delta) + 1 is kept
    iff J >= i0 + 1 and (J - i0 - 1) mod k < width."""

    delta: float
    k: int
    width: int
    i0: int

    def keep(self, rho):
        J = np.floor(np.asarray(rho) / self.delta).astype(np.int64) + 1
        return (J >= self.i0 + 1) & (np.mod(J - self.i0 - 1, self.k) < self.width)

    def kept_blocks(self, r_lo: float, r_hi: float):
        """Radius blocks [start, stop) of kept stripes meeting [r_lo, r_hi]."""
        period = self.k * self.delta
        base = self.i0 * self.delta
        m0 = max(0, math.floor((r_lo - base) / period) - 1)
        m1 = max(m0, math.ceil((r_hi - base) / period) + 1)
        m = np.arange(m0, m1 + 1, dtype=float)
        start = base + m * period
        stop = start + self.width * self.delta
        return start, stop


def _stripe_pieces(rule: StripeRule, x0, d, t0, t1):
    """Parameter intervals of [t0, t1] on the line whose radius is kept."""
    dd = float(d @ d)
    ts = -float(x0 @ d) / dd
    rho_star2 = max(float(x0 @ x0) - dd * ts * ts, 0.0)
    out = []

    def rho(t):
        return math.sqrt(rho_star2 + dd * (t - ts) ** 2)

    for a, b, side in ((t0, min(t1, ts), -1.0), (max(t0, ts), t1, 1.0)):
        if b <= a:
            continue
        ra, rb = rho(a), rho(b)
        r_lo, r_hi = min(ra, rb), max(ra, rb)
        start, stop = rule.kept_blocks(r_lo, r_hi)
        s = np.clip(start, r_lo, r_hi)
        e = np.clip(stop, r_lo, r_hi)
        keep = e > s
        s, e = s[keep], e[keep]
        if s.size == 0:
            continue
        ta = ts + side * np.sqrt(np.maximum(s * s - rho_star2, 0.0) / dd)
        tb = ts + side * np.sqrt(np.maximum(e * e - rho_star2, 0.0) / dd)
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        out.append(np.stack([lo, hi], axis=1))
    if not out:
        return np.zeros((0, 2))
    iv = np.concatenate(out)
    iv = iv[np.argsort(iv[:, 0])]
    return iv


def striped_subset(base: MembershipSet, lam: float, delta: float, stream=None, k: Optional[int] = None,
                   i0: Optional[int] = None, samples: int = CALIBRATION_SAMPLES) -> MembershipSet:
    """Keep a lam-fraction of thin radial shells of ``base``.

    Radii are cut into intervals of width ``delta``; within each period of
    ``k`` intervals the first ceil(lam k) after the offset ``i0`` are kept.
    ``k`` defaults to floor(delta^(-1/5)); ``i0`` defaults to the offset with
    the largest Monte Carlo mass.
    """
    if not 0 < lam < 1:
        raise ValueError("lam must lie in (0, 1)")
    if k is None:
        k = math.floor(delta ** (-0.2))
    if k < 2:
        raise ValueError("delta too large: need k >= 2")
    width = math.ceil(lam * k - 1e-12)
    st = _stream(stream)
    if i0 is None:
        if base.ambient is None:
            raise ValueError("choosing i0 needs an ambient sampler")
        rho = _chunked_stat(
            base.ambient,
            lambda x: np.where(base.contains(x), np.sqrt(np.einsum("ij,ij->i", x, x)), -1.0),
            st.split(0), samples, base.n,
        )
        rho = rho[rho >= 0]
        best, best_mass = 1, -1.0
        for i in range(1, k + 1):
            mass = float(np.mean(StripeRule(delta, k, width, i).keep(rho))) if rho.size else 0.0
            if mass > best_mass:
                best, best_mass = i, mass
        i0 = best
    rule = StripeRule(delta, k, width, int(i0))

    def contains(x):
        rho = np.sqrt(np.einsum("ij,ij->i", x, x))
        return base.contains(x) & rule.keep(rho)

    def inter(X0, D):
        blo, bhi = base.batch_intervals(X0, D)
        rows = []
        for j in range(X0.shape[0]):
            pieces = [
                _stripe_pieces(rule, X0[j], D[j], a, b)
                for a, b in zip(blo[j], bhi[j]) if b > a
            ]
            rows.append(np.concatenate(pieces) if pieces else np.zeros((0, 2)))
        width_max = max(1, max(r.shape[0] for r in rows))
        lo = np.zeros((len(rows), width_max))
        hi = np.zeros((len(rows), width_max))
        for j, r in enumerate(rows):
            lo[j, :r.shape[0]] = r[:, 0]
            hi[j, :r.shape[0]] = r[:, 1]
        return lo, hi

    desc = {"kind": "striped", "base": base.descriptor, "lambda": lam, "delta": delta, "k": k,
            "width": width, "i0": rule.i0, "seed": st.label()}
    return MembershipSet(base.n, contains, desc, base.ambient,
                         inter if base.intersector is not None else None)


def striped_cube_shell(n: int, lam: float, eps: float, delta: float, stream=None,
                       samples: int = CALIBRATION_SAMPLES) -> MembershipSet:
    """Striped subset of the cube [1, 2]^n with k = floor(delta^(-1/5)).

    ``eps`` is the additive slack the stripes are meant to achieve; it is
    recorded in the descriptor and checked by :func:`stripe_slack_bound`.
    """
    base = box_set(1.0, 2.0, n)
    S = striped_subset(base, lam, delta, stream=stream, samples=samples)
    return S.with_descriptor(kind="striped-cube-shell", eps=eps, n=n)


def stripe_slack_bound(n: int, delta: float) -> float:
    """Additive slack 4 k sqrt(delta) n^(1/4) of the striped construction."""
    k = math.floor(delta ** (-0.2))
    return 4.0 * k * math.sqrt(delta) * n ** 0.25


# ----------------------------------------------------------------------------
# descriptors
# ----------------------------------------------------------------------------


def build_from_descriptor(desc: dict, stream=None) -> MembershipSet:
    """Rebuild a set from a (kind, parameters) record."""
    kind = desc["kind"]
    n = int(desc.get("n", 0))
    if kind == "ball-shell":
        return ball_shell_construction(n)
    if kind == "euclidean-shell":
        return euclidean_shell(desc["r_lo"], desc["r_hi"], n)
    if kind == "euclidean-ball":
        return euclidean_ball_set(desc["radius"], n)
    if kind == "box":
        return box_set(desc["lo"], desc["hi"], n)
    if kind == "body-l2-shell":
        return body_l2_shell(LpBall(desc["p"], n), stream, C0=desc.get("C0"), target=desc.get("target", 0.5))
    if kind == "lp-shell":
        return lp_shell(desc["p"], n, stream, C0=desc.get("C0"), target=desc.get("target", 0.5))
    if kind == "hybrid-shell":
        return hybrid_shell(desc["p"], n, stream, C0=desc.get("C0"), scale=desc.get("scale", 1.0),
                            target=desc.get("target", 0.5))
    if kind == "striped-cube-shell":
        return striped_cube_shell(n, desc["lambda"], desc.get("eps", 0.02), desc["delta"], stream)
    raise ValueError(f"cannot rebuild set of kind {kind!r}")


__all__ = [
    "MembershipSet",
    "SeparableBand",
    "CalibrationError",
    "HybridProfile",
    "StripeRule",
    "mc_volume",
    "euclidean_shell",
    "euclidean_ball_set",
    "ball_shell_construction",
    "product_norm_shell",
    "body_l2_shell",
    "lp_shell",
    "hybrid_shell",
    "box_set",
    "full_space",
    "empty_set",
    "striped_subset",
    "striped_cube_shell",
    "stripe_slack_bound",
    "build_from_descriptor",
    "kappa",
]
