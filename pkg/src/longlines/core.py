"""Geometric primitives: norms, the volume-one l_p ball, segments and bumps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import gammaln

MAX_BUMP_ORDER = 4


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"p must lie in [1, inf], got {p}")
    return p


def lp_norm(x, p: float):
    """Return the l_p norm of ``x`` along its last axis.

    :param x: array of shape (..., n) with n >= 1
    :param p: exponent in [1, inf]; ``math.inf`` gives the max norm
    """
    p = _check_p(p)
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError("lp_norm needs a nonempty vector")
    ax = np.abs(x)
    if math.isinf(p):
        return ax.max(axis=-1)
    if p == 1.0:
        return ax.sum(axis=-1)
    if p == 2.0:
        return np.sqrt(np.einsum("...i,...i->...", x, x))
    # scale by the max entry so large n and large p do not overflow
    m = ax.max(axis=-1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    s = np.sum((ax / safe) ** p, axis=-1)
    return np.squeeze(safe, axis=-1) * s ** (1.0 / p)


def lp_norm_pow(x, p: float):
    """Return sum |x_i|^p along the last axis (finite p only)."""
    x = np.asarray(x, dtype=float)
    if p == 2.0:
        return np.einsum("...i,...i->...", x, x)
    return np.sum(np.abs(x) ** p, axis=-1)


def log_kappa(p: float, n: int) -> float:
    """Natural log of the radius that gives the l_p ball in R^n volume one."""
    p = _check_p(p)
    if n < 1:
        raise ValueError("dimension must be positive")
    if math.isinf(p):
        return math.log(0.5)
    return float(gammaln(1.0 + n / p) / n - math.log(2.0) - gammaln(1.0 + 1.0 / p))


def kappa(p: float, n: int) -> float:
    """Radius making {||x||_p <= kappa} a body of volume one in R^n."""
    return math.exp(log_kappa(p, n))


def a_tilde(p: float, n: int) -> float:
    """Scale of a single coordinate of a uniform point in the volume-one ball.

    Equals kappa(p, n) * p^(1/p) / n^(1/p).
    """
    p = _check_p(p)
    if math.isinf(p):
        raise ValueError("a_tilde is undefined for p = inf")
    return math.exp(log_kappa(p, n) + math.log(p) / p - math.log(n) / p)


def a_tilde_limit(p: float) -> float:
    """Large-n limit of :func:`a_tilde`, exp(-1/p) / (2 Gamma(1 + 1/p))."""
    p = _check_p(p)
    if math.isinf(p):
        raise ValueError("a_tilde is undefined for p = inf")
    return math.exp(-1.0 / p - math.log(2.0) - gammaln(1.0 + 1.0 / p))


@dataclass(frozen=True)
class LpBall:
    """The l_p ball in R^n scaled to volume one; p = inf is the unit cube."""

    p: float
    n: int

    def __post_init__(self):
        object.__setattr__(self, "p", _check_p(self.p))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))

    @property
    def kappa(self) -> float:
        return kappa(self.p, self.n)

    @property
    def is_cube(self) -> bool:
        return math.isinf(self.p)

    def contains(self, x) -> np.ndarray:
        """Vectorized membership for points stacked along the leading axes."""
        x = np.asarray(x, dtype=float)
        if self.is_cube:
            return np.all(np.abs(x) <= 0.5, axis=-1)
        return lp_norm_pow(x, self.p) <= self.kappa ** self.p

    def descriptor(self) -> dict:
        return {"kind": "lp-ball", "p": self.p, "n": self.n, "kappa": self.kappa}


@dataclass(frozen=True)
class Segment:
    """Points origin + t * direction for t in [0, t_max]."""

    origin: np.ndarray
    direction: np.ndarray
    t_max: float = 1.0

    def __post_init__(self):
        origin = np.array(self.origin, dtype=float).reshape(-1)
        direction = np.array(self.direction, dtype=float).reshape(-1)
        if origin.shape != direction.shape:
            raise ValueError("origin and direction must have equal dimension")
        if not (np.all(np.isfinite(origin)) and np.all(np.isfinite(direction))):
            raise ValueError("segment coordinates must be finite")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not np.any(direction != 0):
            raise ValueError("direction must be nonzero")
        origin.setflags(write=False)
        direction.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "t_max", float(self.t_max))

    @property
    def n(self) -> int:
        return self.origin.shape[0]

    @property
    def length(self) -> float:
        return self.t_max * float(np.linalg.norm(self.direction))

    @property
    def end(self) -> np.ndarray:
        return self.origin + self.t_max * self.direction

    def points(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.origin + t[..., None] * self.direction

    def to_record(self) -> dict:
        return {
            "origin": self.origin.tolist(),
            "direction": self.direction.tolist(),
            "t_max": self.t_max,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Segment":
        return cls(np.asarray(rec["origin"]), np.asarray(rec["direction"]), rec["t_max"])


@dataclass(frozen=True)
class BumpFn:
    """A smooth nonnegative bump with analytic derivatives up to order 4.

    ``derivs[k]`` evaluates the k-th derivative on the open support and the
    wrapper returns exact zeros outside it.
    """

    name: str
    support: tuple[float, float]
    derivs: Sequence[Callable[[np.ndarray], np.ndarray]] = field(repr=False)
    max_value: float = 1.0
    max_slope: float = 1.0

    def __call__(self, t, order: int = 0):
        if order < 0 or order > MAX_BUMP_ORDER:
            raise ValueError(f"derivative order must be in 0..{MAX_BUMP_ORDER}")
        t = np.asarray(t, dtype=float)
        lo, hi = self.support
        inside = (t > lo) & (t < hi)
        out = np.zeros_like(t)
        if np.any(inside):
            out[inside] = self.derivs[order](t[inside])
        return out if out.ndim else float(out)

    def descriptor(self) -> dict:
        return {"kind": "bump", "name": self.name, "support": list(self.support)}


def _poly_bump(name: str, poly: Polynomial, support) -> BumpFn:
    derivs = [poly.deriv(k) if k else poly for k in range(MAX_BUMP_ORDER + 1)]
    grid = np.linspace(support[0], support[1], 20001)
    return BumpFn(
        name=name,
        support=(float(support[0]), float(support[1])),
        derivs=tuple(derivs),
        max_value=float(np.max(poly(grid))),
        max_slope=float(np.max(np.abs(derivs[1](grid)))),
    )


def phi_bump() -> BumpFn:
    """(1 - 9 t^2)^5 / 100 on (-1/3, 1/3), zero elsewhere."""
    poly = Polynomial([1.0, 0.0, -9.0]) ** 5 / 100.0
    return _poly_bump("phi", poly, (-1.0 / 3.0, 1.0 / 3.0))


def _exp_bump_derivs():
    # psi(t) = exp(u(s)) with s = 2t - 3 and u(s) = 1 - 1/(1 - s^2).
    # Partial fractions give u^(k)(s) = -k!/2 [(1-s)^-(k+1) + (-1)^k (1+s)^-(k+1)].
    def u_der(s, k):
        if k == 0:
            return 1.0 - 1.0 / (1.0 - s * s)
        f = math.factorial(k)
        return -0.5 * f * ((1.0 - s) ** (-(k + 1)) + (-1) ** k * (1.0 + s) ** (-(k + 1)))

    def make(order):
        def d(t):
            s = 2.0 * t - 3.0
            val = np.exp(u_der(s, 0))
            if order == 0:
                return val
            u1 = u_der(s, 1)
            if order == 1:
                comb = u1
            else:
                u2 = u_der(s, 2)
                if order == 2:
                    comb = u2 + u1 ** 2
                else:
                    u3 = u_der(s, 3)
                    if order == 3:
                        comb = u3 + 3 * u1 * u2 + u1 ** 3
                    else:
                        u4 = u_der(s, 4)
                        comb = u4 + 4 * u1 * u3 + 3 * u2 ** 2 + 6 * u1 ** 2 * u2 + u1 ** 4
            return (2.0 ** order) * comb * val

        return d

    return tuple(make(k) for k in range(MAX_BUMP_ORDER + 1))


def psi_bump(shape: str = "exp") -> BumpFn:
    """Bump supported on [1, 2] with maximum value 1 at t = 3/2.

    :param shape: ``"exp"`` for exp(1 - 1/(1 - (2t-3)^2)) or ``"poly"`` for
        the C^4 polynomial (1 - (2t-3)^2)^5
    """
    if shape == "exp":
        derivs = _exp_bump_derivs()
        grid = np.linspace(1.0, 2.0, 20001)[1:-1]
        return BumpFn(
            name="psi-exp",
            support=(1.0, 2.0),
            derivs=derivs,
            max_value=1.0,
            max_slope=float(np.max(np.abs(derivs[1](grid)))),
        )
    if shape == "poly":
        # keep the coefficients in s = 2t - 3 so evaluation on [1, 2] stays well conditioned
        s = Polynomial([0.0, 1.0], domain=[1.0, 2.0], window=[-1.0, 1.0])
        return _poly_bump("psi-poly", (1.0 - s * s) ** 5, (1.0, 2.0))
    raise ValueError(f"unknown bump shape {shape!r}")


_PHI = phi_bump()


def bump_phi(t, order: int = 0):
    """Value or derivative of the fixed bump (1 - 9 t^2)^5 / 100."""
    return _PHI(t, order)


def psi2(psi: BumpFn, x1, x2, order: tuple[int, int] = (0, 0)):
    """Tensor bump psi(x1) psi(x2) and its mixed partial derivatives."""
    return np.asarray(psi(x1, order[0])) * np.asarray(psi(x2, order[1]))


def bump_by_name(name: str) -> BumpFn:
    """Look up a bump by its descriptor name (``phi``, ``psi-exp``, ``psi-poly``)."""
    if name == "phi":
        return phi_bump()
    if name.startswith("psi-"):
        return psi_bump(name[4:])
    raise ValueError(f"unknown bump {name!r}")
