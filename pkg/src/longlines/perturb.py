"""Perturbation schemes, their exact densities and total-variation estimates.

Four schemes push a sample a small random distance along a random
direction:

* :class:`ProductScheme` moves each coordinate of a product measure by
  ``r u delta_i phi(x_i)`` after an optional tilt of the base law.
* :class:`HighPScheme` moves coordinates of a uniform l_p ball point that
  lie in ``[1/R, 2/R]`` by ``r u psi(R x_i) delta_i``.
* :class:`LowPScheme` moves coordinate pairs along ``h`` so that the l_p norm
  has no first-order change.
* :class:`SimplexScheme` moves the exponential latents of a simplex point.

:class:`GaussianScheme` (``z + r u w`` with Gaussian ``w``) is included for
the Gaussian and mixture measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate, special

from longlines.core import BumpFn, LpBall, a_tilde, phi_bump, psi_bump
from longlines.rng import RandomStream, as_generator
from longlines.samplers import (
    Component1D,
    ProductMeasure,
    exponential_component,
    sample_lp_ball,
    sample_product,
    simplex_scale,
)

DEFAULT_EPS = 0.05
GL_NODES = 32
DELTA_DRAWS = 1 << 12
ENUM_LIMIT = 24
SMALL_BATCH_DIM = 10


class SchemeConstraintError(ValueError):
    """Scheme parameters break the constraints the construction relies on."""


# ----------------------------------------------------------------------------
# one-dimensional machinery
# ----------------------------------------------------------------------------


def g_of(comp: Component1D, phi: BumpFn, t):
    """(phi^2 rho)'' / rho expanded through log-derivatives of rho.

    Equals (phi^2)'' + 2 (phi^2)' (log rho)' + phi^2 ((log rho)'' + (log rho)'^2).
    """
    t = np.asarray(t, dtype=float)
    f0 = np.asarray(phi(t, 0))
    f1 = np.asarray(phi(t, 1))
    f2 = np.asarray(phi(t, 2))
    active = (f0 != 0) | (f1 != 0) | (f2 != 0)
    if np.any(active) and np.any(np.asarray(comp.density(t[active])) <= 0):
        raise ValueError("density vanishes inside the bump support")
    L1 = np.where(active, comp.log_derivs(t, 1), 0.0)
    L2 = np.where(active, comp.log_derivs(t, 2), 0.0)
    sq = f0 * f0
    sq1 = 2.0 * f0 * f1
    sq2 = 2.0 * f1 * f1 + 2.0 * f0 * f2
    out = sq2 + 2.0 * sq1 * L1 + sq * (L2 + L1 * L1)
    return out if out.ndim else float(out)


_TILT_CACHE: dict = {}


def _tilt_mass(comp: Component1D, phi: BumpFn, R: float) -> float:
    if R == 0:
        return 1.0
    key = (id(comp), id(phi), R)
    hit = _TILT_CACHE.get(key)
    # the stored objects keep the ids alive and guard against id reuse
    if hit is not None and hit[0] is comp and hit[1] is phi:
        return hit[2]
    lo, hi = phi.support
    extra, _ = integrate.quad(
        lambda t: math.expm1(-R * R * g_of(comp, phi, t)) * float(comp.density(t)),
        lo, hi, epsabs=1e-15, epsrel=1e-13, limit=400,
    )
    _TILT_CACHE[key] = (comp, phi, 1.0 + extra)
    return 1.0 + extra


def tilt_normalizer(comp: Component1D, phi: BumpFn, R: float) -> float:
    """kappa_R = 1 / integral of exp(-R^2 g) rho."""
    return 1.0 / _tilt_mass(comp, phi, float(R))


def tilted_density(comp: Component1D, phi: BumpFn, R: float, t):
    t = np.asarray(t, dtype=float)
    base = np.asarray(comp.density(t), dtype=float)
    if R == 0:
        return base
    return tilt_normalizer(comp, phi, R) * np.exp(-R * R * g_of(comp, phi, t)) * base


def _solve_shift(bump_fn, y, amp, sign, scale_in=1.0):
    """Solve x + sign * amp * bump(scale_in * x) = y by bisection.

    ``amp`` may be an array; the map is increasing whenever
    |amp * scale_in * bump'| < 1.  The bracket is [y - |amp| m, y + |amp| m]
    with m the bump maximum.
    """
    y = np.asarray(y, dtype=float)
    amp = np.broadcast_to(np.asarray(amp, dtype=float), y.shape)
    sign = np.broadcast_to(np.asarray(sign, dtype=float), y.shape)
    reach = np.abs(amp) * bump_fn.max_value
    lo = y - reach
    hi = y + reach
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        val = mid + sign * amp * bump_fn(scale_in * mid) - y
        lo = np.where(val < 0, mid, lo)
        hi = np.where(val < 0, hi, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(y))):
            break
    x = 0.5 * (lo + hi)
    # one Newton polish step
    f = x + sign * amp * bump_fn(scale_in * x) - y
    fp = 1.0 + sign * amp * scale_in * bump_fn(scale_in * x, 1)
    return x - f / fp


def density_1d_perturbed(comp: Component1D, r: float, R: float, phi: BumpFn, t):
    """Density of x + r delta phi(x) for x with the tilted law and a random sign.

    f(t) = [rho_R(x1) / (1 + r phi'(x1)) + rho_R(x2) / (1 - r phi'(x2))] / 2
    where x1 + r phi(x1) = t = x2 - r phi(x2).
    """
    if abs(r) > 1:
        raise ValueError("|r| must be at most 1")
    t = np.asarray(t, dtype=float)
    if r == 0:
        return tilted_density(comp, phi, R, t)
    x1 = _solve_shift(phi, t, r, 1.0)
    x2 = _solve_shift(phi, t, r, -1.0)
    f1 = tilted_density(comp, phi, R, x1) / (1.0 + r * np.asarray(phi(x1, 1)))
    f2 = tilted_density(comp, phi, R, x2) / (1.0 - r * np.asarray(phi(x2, 1)))
    out = 0.5 * (f1 + f2)
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------------
# scheme records
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ProductScheme:
    mu: ProductMeasure
    r: float
    R: float = 0.0
    phi: BumpFn = field(default_factory=phi_bump)

    def __post_init__(self):
        if abs(self.r) > 1 or abs(self.R) > 1:
            raise SchemeConstraintError("product scheme needs |r|, |R| <= 1")
        if self.phi.max_slope * abs(self.r) >= 1:
            raise SchemeConstraintError("map t -> t +/- r phi(t) is not monotone")

    @property
    def n(self) -> int:
        return self.mu.n

    def descriptor(self) -> dict:
        return {"kind": "product", "measure": self.mu.descriptor(), "r": self.r, "R": self.R,
                "bump": self.phi.name}


@dataclass(frozen=True)
class HighPScheme:
    ball: LpBall
    r: float
    R: float
    psi: BumpFn = field(default_factory=psi_bump)
    eps: float = DEFAULT_EPS
    strict: bool = True

    def __post_init__(self):
        p, n = self.ball.p, self.ball.n
        if not 2.0 <= p < math.inf:
            raise SchemeConstraintError("high-p scheme needs 2 <= p < inf")
        if self.r * self.R * self.psi.max_slope >= 1:
            raise SchemeConstraintError("coordinate map is not monotone (r R max|psi'| >= 1)")
        if self.strict:
            if not 1.0 <= self.R <= math.sqrt(n) * (1 + 1e-12):
                raise SchemeConstraintError("need 1 <= R <= sqrt(n)")
            if not 0 < self.r <= 1:
                raise SchemeConstraintError("need 0 < r <= 1")
            if n * self.R ** 3 * self.r ** 4 > self.eps ** 6 * (1 + 1e-9):
                raise SchemeConstraintError("need n R^3 r^4 <= eps^6")
            if self.R ** (2 * p + 1) < n * (1 - 1e-9):
                raise SchemeConstraintError("need R^(2p+1) >= n")

    @property
    def n(self) -> int:
        return self.ball.n

    def phi(self, x, order=0):
        return self.r * (self.R ** order) * np.asarray(self.psi(self.R * np.asarray(x), order))

    def descriptor(self) -> dict:
        return {"kind": "highp", "p": self.ball.p, "n": self.n, "r": self.r, "R": self.R,
                "bump": self.psi.name, "eps": self.eps}


@dataclass(frozen=True)
class PairMap:
    """h(x1, x2) = phi(x1, x2) (x1^(1-p), -x2^(1-p)) with
    phi = r psi(R1 (x1 - R2)) psi(R1 (x2 - R2))."""

    p: float
    r: float
    R1: float
    R2: float
    psi: BumpFn = field(default_factory=psi_bump)

    @property
    def support(self) -> tuple[float, float]:
        return (self.R2 + 1.0 / self.R1, self.R2 + 2.0 / self.R1)

    def _phi_parts(self, x1, x2):
        s1 = self.R1 * (np.asarray(x1, dtype=float) - self.R2)
        s2 = self.R1 * (np.asarray(x2, dtype=float) - self.R2)
        a0, a1, a2 = (np.asarray(self.psi(s1, k)) for k in range(3))
        b0, b1, b2 = (np.asarray(self.psi(s2, k)) for k in range(3))
        r, R1 = self.r, self.R1
        return {
            "f": r * a0 * b0,
            "f1": r * R1 * a1 * b0,
            "f2": r * R1 * a0 * b1,
            "f11": r * R1 * R1 * a2 * b0,
            "f12": r * R1 * R1 * a1 * b1,
            "f22": r * R1 * R1 * a0 * b2,
        }

    def _pow_parts(self, x):
        x = np.asarray(x, dtype=float)
        p = self.p
        safe = np.where(x > 0, x, 1.0)
        v0 = safe ** (1.0 - p)
        v1 = (1.0 - p) * safe ** (-p)
        v2 = (1.0 - p) * (-p) * safe ** (-p - 1.0)
        pos = x > 0
        return np.where(pos, v0, 0.0), np.where(pos, v1, 0.0), np.where(pos, v2, 0.0)

    def partials(self, x1, x2) -> dict:
        """h1, h2 and all their partial derivatives up to order 2."""
        F = self._phi_parts(x1, x2)
        a0, a1, a2 = self._pow_parts(x1)
        b0, b1, b2 = self._pow_parts(x2)
        f, f1, f2, f11, f12, f22 = F["f"], F["f1"], F["f2"], F["f11"], F["f12"], F["f22"]
        return {
            "h1": f * a0,
            "h1_1": f1 * a0 + f * a1,
            "h1_2": f2 * a0,
            "h1_11": f11 * a0 + 2.0 * f1 * a1 + f * a2,
            "h1_12": f12 * a0 + f2 * a1,
            "h1_22": f22 * a0,
            "h2": -f * b0,
            "h2_1": -f1 * b0,
            "h2_2": -(f2 * b0 + f * b1),
            "h2_11": -f11 * b0,
            "h2_12": -(f12 * b0 + f1 * b1),
            "h2_22": -(f22 * b0 + 2.0 * f2 * b1 + f * b2),
        }

    def h(self, x1, x2):
        P = self.partials(x1, x2)
        return P["h1"], P["h2"]

    def with_r(self, r: float) -> "PairMap":
        return PairMap(self.p, r, self.R1, self.R2, self.psi)


def pair_jacobian(pm: PairMap, w1, w2, z):
    """Determinant of the differential of w -> w + z h(w)."""
    P = pm.partials(w1, w2)
    return (1.0 + z * P["h1_1"]) * (1.0 + z * P["h2_2"]) - z * z * P["h1_2"] * P["h2_1"]


def g_pair(pm: PairMap, y1, y2):
    """(h1^2)_11 / 2 + (h1 h2)_12 + (h2^2)_22 / 2 from analytic partials."""
    P = pm.partials(y1, y2)
    h1, h2 = P["h1"], P["h2"]
    return (
        P["h1_1"] ** 2 + h1 * P["h1_11"]
        + P["h2_2"] ** 2 + h2 * P["h2_22"]
        + P["h1_12"] * h2 + P["h1_1"] * P["h2_2"] + P["h1_2"] * P["h2_1"] + h1 * P["h2_12"]
    )


def pair_inverse(pm: PairMap, y1, y2, z, tol: float = 1e-14, max_iter: int = 100):
    """Solve (y1, y2) = x + z h(x) by damped Newton iteration.

    The step is halved until the residual decreases, so the iteration
    also converges where plain fixed-point iteration would not contract.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    z = np.broadcast_to(np.asarray(z, dtype=float), np.broadcast(y1, y2).shape)
    x1, x2 = np.array(y1, dtype=float, copy=True), np.array(y2, dtype=float, copy=True)
    x1, x2 = np.broadcast_to(x1, z.shape).copy(), np.broadcast_to(x2, z.shape).copy()

    def residual(a, b):
        h1, h2 = pm.h(a, b)
        return a + z * h1 - y1, b + z * h2 - y2

    r1, r2 = residual(x1, x2)
    scale = np.maximum(1.0, np.abs(y1) + np.abs(y2))
    for _ in range(max_iter):
        err = np.maximum(np.abs(r1), np.abs(r2))
        if np.all(err <= tol * scale):
            break
        P = pm.partials(x1, x2)
        j11 = 1.0 + z * P["h1_1"]
        j12 = z * P["h1_2"]
        j21 = z * P["h2_1"]
        j22 = 1.0 + z * P["h2_2"]
        det = j11 * j22 - j12 * j21
        det = np.where(det == 0, 1e-300, det)
        s1 = (j22 * r1 - j12 * r2) / det
        s2 = (j11 * r2 - j21 * r1) / det
        step = np.ones_like(err)
        for _ in range(30):
            n1, n2 = x1 - step * s1, x2 - step * s2
            q1, q2 = residual(n1, n2)
            worse = np.maximum(np.abs(q1), np.abs(q2)) > err
            if not np.any(worse & (err > tol * scale)):
                break
            step = np.where(worse, 0.5 * step, step)
        x1, x2, r1, r2 = n1, n2, q1, q2
    return x1, x2


@dataclass(frozen=True)
class LowPScheme:
    ball: LpBall
    r: float
    R1: float
    R2: float
    psi: BumpFn = field(default_factory=psi_bump)
    eps: float = DEFAULT_EPS
    strict: bool = True

    def __post_init__(self):
        p, n = self.ball.p, self.ball.n
        if not 1.0 < p < 2.0:
            raise SchemeConstraintError("pair scheme needs 1 < p < 2")
        if not (self.R1 >= 1 and self.R2 >= 0 and 0 < self.r < 1):
            raise SchemeConstraintError("need R1 >= 1, R2 >= 0 and 0 < r < 1")
        if self.strict:
            logn = math.log(n)
            if not 1.0 <= self.R2 <= logn ** (1.0 / p) * (1 + 1e-12):
                raise SchemeConstraintError("need 1 <= R2 <= log^(1/p) n")
            if abs(self.R1 - logn) > 1e-9 * logn:
                raise SchemeConstraintError("need R1 = log n")
            an = a_tilde(p, n)
            lhs = n * self.R1 ** -2 * self.r ** 2 * self.R2 ** -p * math.exp(-2 * self.R2 ** p / an ** p)
            if lhs > self.eps ** 2 * (1 + 1e-9):
                raise SchemeConstraintError("need n R1^-2 r^2 R2^-p exp(-2 R2^p / a_n^p) <= eps^2")
            if self.r ** 5 * n ** 2 > 1 + 1e-9:
                raise SchemeConstraintError("need r^5 n^2 <= 1")

    @property
    def n(self) -> int:
        return self.ball.n

    @property
    def pair_map(self) -> PairMap:
        return PairMap(self.ball.p, self.r, self.R1, self.R2, self.psi)

    def descriptor(self) -> dict:
        return {"kind": "lowp", "p": self.ball.p, "n": self.n, "r": self.r, "R1": self.R1,
                "R2": self.R2, "bump": self.psi.name, "eps": self.eps}


@dataclass(frozen=True)
class SimplexScheme:
    """Perturbation of the exponential latents of a simplex point.

    With ``signed=True`` every point also receives independent random
    coordinate signs, which turns the positive simplex into the l_1 ball.
    """

    n: int
    r: float
    psi: BumpFn = field(default_factory=psi_bump)
    signed: bool = False

    def __post_init__(self):
        if self.r * self.psi.max_slope >= 1 or self.r < 0:
            raise SchemeConstraintError("need 0 <= r < 1 / max|psi'|")

    def descriptor(self) -> dict:
        return {"kind": "simplex", "n": self.n, "r": self.r, "bump": self.psi.name,
                "signed": self.signed}


@dataclass(frozen=True)
class GaussianScheme:
    """z + r u w for independent standard Gaussian vectors z and w.

    With ``mixture=True`` (and r = 1) the perturbed law is the Gaussian
    mixture x + U y itself, so segments z + u w sample that measure.
    """

    n: int
    r: float
    mixture: bool = False

    def descriptor(self) -> dict:
        return {"kind": "gaussian", "n": self.n, "r": self.r, "mixture": self.mixture}


Scheme = Union[ProductScheme, HighPScheme, LowPScheme, SimplexScheme, GaussianScheme]


# ----------------------------------------------------------------------------
# applying and inverting
# ----------------------------------------------------------------------------


def apply_scheme(scheme: Scheme, x, delta, u: float = 1.0, latent=None):
    """The perturbed point(s).

    ``x`` may be a single vector or a stack of vectors.  ``delta`` holds
    signs (one per coordinate, or one per pair for the pair scheme) and, for
    :class:`GaussianScheme`, the Gaussian direction.  ``u`` scales r.  The
    simplex scheme needs ``latent=(g, Z)``, the exponential draws that
    produced ``x``.
    """
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if isinstance(scheme, ProductScheme):
        return x + scheme.r * u * delta * np.asarray(scheme.phi(x))
    if isinstance(scheme, HighPScheme):
        return x + u * scheme.phi(x) * delta
    if isinstance(scheme, GaussianScheme):
        return x + scheme.r * u * delta
    if isinstance(scheme, LowPScheme):
        pm = scheme.pair_map.with_r(scheme.r * u)
        y = x.copy()
        k = scheme.n // 2
        h1, h2 = pm.h(x[..., 0:2 * k:2], x[..., 1:2 * k:2])
        y[..., 0:2 * k:2] += delta * h1
        y[..., 1:2 * k:2] += delta * h2
        return y
    if isinstance(scheme, SimplexScheme):
        if latent is None:
            raise ValueError("simplex scheme needs the latent (g, Z)")
        g, z = (np.asarray(v, dtype=float) for v in latent)
        f = g + scheme.r * u * np.asarray(scheme.psi(g)) * delta
        return simplex_scale(scheme.n) * f / (np.asarray(z)[..., None] + f.sum(axis=-1, keepdims=True))
    raise TypeError(f"unknown scheme {type(scheme).__name__}")


def invert_scheme(scheme: Scheme, y, delta, u: float = 1.0, latent_z=None):
    """Recover x from y = apply_scheme(scheme, x, delta, u).

    The simplex scheme returns the latent g and needs the exponential ``Z``.
    """
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if isinstance(scheme, ProductScheme):
        return _solve_shift(scheme.phi, y, scheme.r * u, delta)
    if isinstance(scheme, HighPScheme):
        return _solve_shift(scheme.psi, y, scheme.r * u, delta, scale_in=scheme.R)
    if isinstance(scheme, GaussianScheme):
        return y - scheme.r * u * delta
    if isinstance(scheme, LowPScheme):
        pm = scheme.pair_map.with_r(scheme.r * u)
        x = y.copy()
        k = scheme.n // 2
        x1, x2 = pair_inverse(pm, y[..., 0:2 * k:2], y[..., 1:2 * k:2], delta)
        x[..., 0:2 * k:2] = x1
        x[..., 1:2 * k:2] = x2
        return x
    if isinstance(scheme, SimplexScheme):
        if latent_z is None:
            raise ValueError("simplex inversion needs Z")
        c = simplex_scale(scheme.n)
        sy = y.sum(axis=-1, keepdims=True)
        z = np.asarray(latent_z, dtype=float)[..., None]
        S = z * sy / (c - sy)
        f = y * (z + S) / c
        return _solve_shift(scheme.psi, f, scheme.r * u, delta)
    raise TypeError(f"unknown scheme {type(scheme).__name__}")


# ----------------------------------------------------------------------------
# densities
# ----------------------------------------------------------------------------


def product_log_ratio(scheme: ProductScheme, y, u: float = 1.0):
    """sum_i log(f_i(y_i) / rho_i(y_i)) at a fixed value of U (rows of y)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    out = np.zeros(y.shape[0])
    r = scheme.r * u
    for comp, idx in scheme.mu.distinct_components():
        block = y[:, idx]
        f = density_1d_perturbed(comp, r, scheme.R, scheme.phi, block)
        base = np.asarray(comp.density(block), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.where(base > 0, np.log(np.where(f > 0, f, 1e-300) / np.where(base > 0, base, 1.0)), 0.0)
        out += lr.sum(axis=1)
    return out


def product_density_ratio(scheme: ProductScheme, y, nodes: int = GL_NODES):
    """f(y) / prod rho_i(y_i) with U mixed out by Gauss-Legendre quadrature."""
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    us = 0.5 * (xs + 1.0)
    ws = 0.5 * ws
    logs = np.stack([product_log_ratio(scheme, y, u) for u in us], axis=0)
    return np.exp(special.logsumexp(logs, axis=0, b=ws[:, None]))


def _highp_active(scheme: HighPScheme, y):
    Ry = scheme.R * np.asarray(y)
    return (Ry >= 1.0) & (Ry <= 2.0)


def _highp_branches(scheme: HighPScheme, y, u: float = 1.0):
    """Per coordinate: inverses for delta = +1/-1 and their Jacobian factors."""
    r = scheme.r * u
    xp = _solve_shift(scheme.psi, y, r, 1.0, scale_in=scheme.R)
    xm = _solve_shift(scheme.psi, y, r, -1.0, scale_in=scheme.R)
    fp = 1.0 / (1.0 + u * scheme.phi(xp, 1))
    fm = 1.0 / (1.0 - u * scheme.phi(xm, 1))
    return xp, xm, fp, fm


def density_highp(scheme: HighPScheme, y, mode: str = "exact", samples: int = DELTA_DRAWS, stream=None):
    """Density of the high-p perturbation at the point ``y``.

    Averages 1{x(y, delta) in B} prod (1 + phi'(x_i) delta_i)^(-1) over signs,
    either over all 2^|I| sign patterns of the active coordinates
    I(y) = {i : 1 <= R y_i <= 2} (``mode="exact"``) or over ``samples``
    random patterns (``mode="mc"``).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim == 2:
        if mode == "exact" and y.shape[1] <= SMALL_BATCH_DIM:
            return _density_highp_small(scheme, y)
        return np.array([density_highp(scheme, row, mode, samples,
                                       None if stream is None else stream.split(j))
                         for j, row in enumerate(y)])
    if y.ndim != 1:
        raise ValueError("density_highp takes a point or a stack of points")
    p = scheme.ball.p
    kp = scheme.ball.kappa ** p
    act = np.flatnonzero(_highp_active(scheme, y))
    # inactive coordinates are fixed by every sign pattern
    rest = float(np.sum(np.abs(np.delete(y, act)) ** p))
    # coordinates just outside [1/R, 2/R] may still move; include them when they can
    if act.size == 0:
        return 1.0 if rest <= kp else 0.0
    ya = y[act]
    xp, xm, fp, fm = _highp_branches(scheme, ya)
    ap, am = np.abs(xp) ** p, np.abs(xm) ** p
    if mode == "exact":
        if act.size > ENUM_LIMIT:
            raise ValueError(f"exact enumeration needs |I| <= {ENUM_LIMIT}, got {act.size}")
        total = 0.0
        count = 1 << act.size
        chunk = 1 << 16
        bits = np.arange(act.size)
        for start in range(0, count, chunk):
            codes = np.arange(start, min(count, start + chunk))
            plus = ((codes[:, None] >> bits) & 1).astype(bool)
            norm = rest + np.where(plus, ap, am).sum(axis=1)
            w = np.prod(np.where(plus, fp, fm), axis=1)
            total += float(np.sum(np.where(norm <= kp, w, 0.0)))
        return total / count
    if mode == "mc":
        gen = as_generator(stream if stream is not None else RandomStream(0))
        plus = gen.random((samples, act.size)) < 0.5
        norm = rest + np.where(plus, ap, am).sum(axis=1)
        logw = np.where(plus, np.log(fp), np.log(fm)).sum(axis=1)
        return float(np.mean(np.where(norm <= kp, np.exp(logw), 0.0)))
    raise ValueError(f"unknown mode {mode!r}")


def _density_highp_small(scheme: HighPScheme, Y):
    """Vectorised exact density for low dimension: all 2^n sign patterns.

    Inactive coordinates are fixed points of both branches with unit
    Jacobian, so enumerating them too leaves the average unchanged.
    """
    p = scheme.ball.p
    kp = scheme.ball.kappa ** p
    m, n = Y.shape
    xp, xm, fp, fm = _highp_branches(scheme, Y)
    ap, am = np.abs(xp) ** p, np.abs(xm) ** p
    total = np.zeros(m)
    for code in range(1 << n):
        plus = ((code >> np.arange(n)) & 1).astype(bool)
        norm = np.where(plus, ap, am).sum(axis=1)
        w = np.prod(np.where(plus, fp, fm), axis=1)
        total += np.where(norm <= kp, w, 0.0)
    return total / (1 << n)


def highp_coordinate_mean(scheme: HighPScheme, y1):
    """E over delta of (1 + phi'(x) delta)^(-1) for one coordinate, and (phi^2/2)''(y1)."""
    xp, xm, fp, fm = _highp_branches(scheme, np.asarray(y1, dtype=float))
    mean = 0.5 * (fp + fm)
    phi0, phi1, phi2 = (scheme.phi(y1, k) for k in range(3))
    return mean, phi2 * phi0 + phi1 * phi1


def pair_jacobian_mean(pm: PairMap, y1, y2):
    """E over the pair sign of J(x(y, z), z)^(-1), solving each inverse exactly."""
    total = 0.0
    for z in (1.0, -1.0):
        x1, x2 = pair_inverse(pm, y1, y2, z)
        total = total + 0.5 / pair_jacobian(pm, x1, x2, z)
    return total


def density_lowp(scheme: LowPScheme, y, samples: int = DELTA_DRAWS, stream=None):
    """Density of the pair scheme at ``y`` by Monte Carlo over pair signs."""
    y = np.asarray(y, dtype=float)
    p = scheme.ball.p
    kp = scheme.ball.kappa ** p
    pm = scheme.pair_map
    k = scheme.n // 2
    y1, y2 = y[0:2 * k:2], y[1:2 * k:2]
    lo, hi = pm.support
    reach = scheme.r * max(lo, 1e-300) ** (1.0 - p) * pm.psi.max_value
    near = (y1 >= lo - reach) & (y1 <= hi + reach) & (y2 >= lo - reach) & (y2 <= hi + reach)
    act = np.flatnonzero(near)
    fixed = float(np.sum(np.abs(y) ** p)) - float(np.sum(np.abs(y1[act]) ** p + np.abs(y2[act]) ** p))
    if act.size == 0:
        return 1.0 if fixed <= kp else 0.0
    norms, facs = [], []
    for z in (1.0, -1.0):
        x1, x2 = pair_inverse(pm, y1[act], y2[act], z)
        norms.append(np.abs(x1) ** p + np.abs(x2) ** p)
        facs.append(1.0 / pair_jacobian(pm, x1, x2, z))
    gen = as_generator(stream if stream is not None else RandomStream(0))
    plus = gen.random((samples, act.size)) < 0.5
    norm = fixed + np.where(plus, norms[0], norms[1]).sum(axis=1)
    w = np.prod(np.where(plus, facs[0], facs[1]), axis=1)
    return float(np.mean(np.where(norm <= kp, w, 0.0)))


# ----------------------------------------------------------------------------
# total variation
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TVEstimate:
    value: float
    stderr: float
    inside_term: float
    outside_term: float
    samples: int
    method: str

    def to_record(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "inside_term": self.inside_term,
                "outside_term": self.outside_term, "samples": self.samples, "method": self.method}


def _chi_logpdf(rho, n, scale):
    rho = np.asarray(rho, dtype=float)
    return ((n - 1) * np.log(rho / scale) - 0.5 * (rho / scale) ** 2
            - (0.5 * n - 1) * math.log(2.0) - special.gammaln(0.5 * n) - math.log(scale))


def gaussian_tv(n: int, r: float, mixture_u: bool = False) -> float:
    """TV distance between N(0, I) and the law of z + r w (or z + r U w).

    Both laws are radial, so the distance equals the TV distance of the
    norms, computed by one-dimensional quadrature of chi densities.
    """
    if r == 0:
        return 0.0
    if mixture_u:
        xs, ws = np.polynomial.legendre.leggauss(GL_NODES)
        us = 0.5 * (xs + 1.0)
        ws = 0.5 * ws

        def other(rho):
            return sum(w * np.exp(_chi_logpdf(rho, n, math.sqrt(1.0 + (u * r) ** 2))) for u, w in zip(us, ws))
    else:
        s = math.sqrt(1.0 + r * r)

        def other(rho):
            return np.exp(_chi_logpdf(rho, n, s))

    def integrand(rho):
        return abs(float(np.exp(_chi_logpdf(rho, n, 1.0))) - float(other(rho)))

    mode = math.sqrt(max(n - 1, 0.0))
    width = 12.0 * (1.0 + r)
    lo, hi = max(mode - width, 1e-12), mode * math.sqrt(1 + r * r) + width
    pts = np.linspace(lo, hi, 9)
    val, _ = integrate.quad(integrand, lo, hi, points=list(pts[1:-1]), limit=500, epsabs=1e-12)
    return 0.5 * val


def _stderr_of_terms(inside: np.ndarray, outside: np.ndarray):
    total = 0.5 * inside + 0.5 * outside
    return float(np.std(total, ddof=1) / math.sqrt(total.size)) if total.size > 1 else 0.0


def tv_estimate(scheme: Scheme, n_samples: int, stream, delta_draws: int = DELTA_DRAWS) -> TVEstimate:
    """Estimate d_TV(X, Y) = (1/2) integral |f - base|.

    Returns ``inside_term`` = (1/2) E_X |f(X)/base(X) - 1| and
    ``outside_term`` = (1/2) P(Y outside the support of the base law), and
    their sum as ``value``.
    """
    st = stream if isinstance(stream, RandomStream) else RandomStream(0)
    if isinstance(scheme, GaussianScheme):
        if scheme.mixture:
            raise ValueError("no computable density for the perturbed mixture")
        v = gaussian_tv(scheme.n, scheme.r)
        return TVEstimate(v, 0.0, v, 0.0, 0, "radial-quadrature")
    if isinstance(scheme, ProductScheme):
        X = sample_product(scheme.mu, st.split(0), n_samples)
        ratio = product_density_ratio(scheme, X)
        inside = np.abs(ratio - 1.0)
        outside = np.zeros_like(inside)
        return TVEstimate(float(0.5 * inside.mean()), _stderr_of_terms(inside, outside),
                          float(0.5 * inside.mean()), 0.0, n_samples, "gauss-legendre")
    if isinstance(scheme, SimplexScheme):
        comp = exponential_component()
        g = comp.sample(st.split(0).generator(), (n_samples, scheme.n))
        f = density_1d_perturbed(comp, scheme.r, 0.0, scheme.psi, g)
        ratio = np.exp(np.sum(np.log(f) - np.log(comp.density(g)), axis=1))
        inside = np.abs(ratio - 1.0)
        return TVEstimate(float(0.5 * inside.mean()), _stderr_of_terms(inside, np.zeros_like(inside)),
                          float(0.5 * inside.mean()), 0.0, n_samples, "product-1d")
    if isinstance(scheme, (HighPScheme, LowPScheme)):
        ball = scheme.ball
        X = sample_lp_ball(ball, st.split(0), n_samples)
        inside = np.empty(n_samples)
        for j in range(n_samples):
            if isinstance(scheme, HighPScheme):
                f = density_highp(scheme, X[j], mode="mc", samples=delta_draws, stream=st.split(1, j))
            else:
                f = density_lowp(scheme, X[j], samples=delta_draws, stream=st.split(1, j))
            inside[j] = abs(f - 1.0)
        gen = st.split(2).generator()
        Xo = sample_lp_ball(ball, gen, n_samples)
        U = gen.random(n_samples)
        if isinstance(scheme, HighPScheme):
            signs = gen.integers(0, 2, (n_samples, ball.n)) * 2.0 - 1.0
            Y = apply_scheme(scheme, Xo, signs, U[:, None])
        else:
            signs = gen.integers(0, 2, (n_samples, ball.n // 2)) * 2.0 - 1.0
            Y = np.stack([apply_scheme(scheme, Xo[j], signs[j], 1.0) for j in range(n_samples)])
        outside = (~ball.contains(Y)).astype(float)
        tv_in = float(0.5 * inside.mean())
        tv_out = float(0.5 * outside.mean())
        se = math.sqrt(np.var(0.5 * inside, ddof=1) / n_samples + np.var(0.5 * outside, ddof=1) / n_samples)
        return TVEstimate(tv_in + tv_out, se, tv_in, tv_out, n_samples, "mc-over-signs")
    raise TypeError(f"unknown scheme {type(scheme).__name__}")


__all__ = [
    "DEFAULT_EPS",
    "SchemeConstraintError",
    "g_of",
    "tilt_normalizer",
    "tilted_density",
    "density_1d_perturbed",
    "ProductScheme",
    "HighPScheme",
    "LowPScheme",
    "SimplexScheme",
    "GaussianScheme",
    "PairMap",
    "pair_jacobian",
    "g_pair",
    "pair_inverse",
    "pair_jacobian_mean",
    "apply_scheme",
    "invert_scheme",
    "product_log_ratio",
    "product_density_ratio",
    "density_highp",
    "density_lowp",
    "highp_coordinate_mean",
    "gaussian_tv",
    "tv_estimate",
    "TVEstimate",
]
