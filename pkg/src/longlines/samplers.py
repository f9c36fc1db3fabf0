"""Exact seeded samplers for the measures used throughout the package.

Every sampler takes a :class:`~longlines.rng.RandomStream` (or a numpy
``Generator``) and an optional ``size``.  With ``size=None`` one vector is
returned; otherwise an array of shape ``(size, n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from longlines.core import BumpFn, LpBall, kappa
from longlines.rng import as_generator

MAX_REJECTION_TRIES = 10 ** 6


# ----------------------------------------------------------------------------
# one-dimensional components
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Component1D:
    """A one-dimensional law with density, log-density derivatives and sampler.

    :param log_derivs: ``log_derivs(t, k)`` is the k-th derivative of log rho
    :param C: declared bound on |(log rho)^(k)| over (-1/2, 1/2), k = 0..4
    :param subgauss: declared (C_tilde, c_tilde) with P(|W| >= t) <= C_tilde exp(-c_tilde t^2),
        or None when the law is not sub-Gaussian
    """

    name: str
    density: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    log_derivs: Callable[[np.ndarray, int], np.ndarray] = field(repr=False)
    sampler: Callable[[np.random.Generator, object], np.ndarray] = field(repr=False)
    support: tuple[float, float]
    C: float
    subgauss: Optional[tuple[float, float]] = None
    second_moment: Optional[float] = None

    def sample(self, gen: np.random.Generator, size) -> np.ndarray:
        return self.sampler(gen, size)


def gaussian_component() -> Component1D:
    half_log_2pi = 0.5 * math.log(2.0 * math.pi)

    def log_derivs(t, k):
        t = np.asarray(t, dtype=float)
        if k == 0:
            return -0.5 * t * t - half_log_2pi
        if k == 1:
            return -t
        if k == 2:
            return -np.ones_like(t)
        return np.zeros_like(t)

    return Component1D(
        name="gaussian",
        density=lambda t: np.exp(-0.5 * np.asarray(t, dtype=float) ** 2 - half_log_2pi),
        log_derivs=log_derivs,
        sampler=lambda gen, size: gen.standard_normal(size),
        support=(-math.inf, math.inf),
        C=1.1,
        subgauss=(2.0, 0.5),
        second_moment=1.0,
    )


def uniform_component() -> Component1D:
    def density(t):
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) <= 0.5, 1.0, 0.0)

    return Component1D(
        name="uniform",
        density=density,
        log_derivs=lambda t, k: np.zeros_like(np.asarray(t, dtype=float)),
        sampler=lambda gen, size: gen.uniform(-0.5, 0.5, size),
        support=(-0.5, 0.5),
        C=0.0,
        subgauss=(1.0, 4.0),
        second_moment=1.0 / 12.0,
    )


def exponential_component() -> Component1D:
    """Standard exponential law; used by the simplex perturbation."""

    def density(t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, np.exp(-np.maximum(t, 0.0)), 0.0)

    def log_derivs(t, k):
        t = np.asarray(t, dtype=float)
        if k == 0:
            return -t
        if k == 1:
            return -np.ones_like(t)
        return np.zeros_like(t)

    return Component1D(
        name="exponential",
        density=density,
        log_derivs=log_derivs,
        sampler=lambda gen, size: gen.standard_exponential(size),
        support=(0.0, math.inf),
        C=math.inf,
        subgauss=None,
        second_moment=2.0,
    )


COMPONENTS = {
    "gaussian": gaussian_component,
    "uniform": uniform_component,
    "exponential": exponential_component,
}


# ----------------------------------------------------------------------------
# product measures
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ProductMeasure:
    """Product of one-dimensional components.

    ``components`` holds either n records or a single record shared by all
    coordinates.
    """

    n: int
    components: tuple[Component1D, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) not in (1, self.n):
            raise ValueError("need one component per coordinate or a single shared one")
        object.__setattr__(self, "components", comps)

    @classmethod
    def iid(cls, component: Component1D, n: int) -> "ProductMeasure":
        return cls(n=n, components=(component,))

    @property
    def is_iid(self) -> bool:
        return len(self.components) == 1

    def component(self, i: int) -> Component1D:
        return self.components[0] if self.is_iid else self.components[i]

    def distinct_components(self):
        """Yield (component, coordinate indices) groups."""
        if self.is_iid:
            yield self.components[0], np.arange(self.n)
            return
        by_name: dict[int, list[int]] = {}
        for i, c in enumerate(self.components):
            by_name.setdefault(id(c), []).append(i)
        for idx in by_name.values():
            yield self.components[idx[0]], np.asarray(idx)

    def validate(self, grid: int = 2001) -> None:
        """Check unit mass and the declared bounds of conditions (i) and (ii).

        Raises ``ValueError`` when a component violates its declaration.
        """
        t = np.linspace(-0.5, 0.5, grid + 2)[1:-1]
        for comp, _ in self.distinct_components():
            lo, hi = comp.support
            mass, _ = integrate.quad(comp.density, lo, hi, limit=200)
            if abs(mass - 1.0) > 1e-8:
                raise ValueError(f"component {comp.name} has mass {mass}")
            for k in range(5):
                if np.max(np.abs(comp.log_derivs(t, k))) > comp.C + 1e-12:
                    raise ValueError(f"component {comp.name} breaks its bound C at order {k}")
            if comp.subgauss is not None:
                ct, cc = comp.subgauss
                for s in np.linspace(0.5, 6.0, 12):
                    tail, _ = integrate.quad(comp.density, s, max(hi, s), limit=200) if hi > s else (0.0, 0)
                    tail_lo, _ = integrate.quad(comp.density, min(lo, -s), -s, limit=200) if lo < -s else (0.0, 0)
                    if tail + tail_lo > ct * math.exp(-cc * s * s) + 1e-12:
                        raise ValueError(f"component {comp.name} breaks its sub-Gaussian bound")

    def descriptor(self) -> dict:
        names = sorted({c.name for c in self.components})
        return {"kind": "product", "n": self.n, "components": names}


def gaussian_product(n: int) -> ProductMeasure:
    return ProductMeasure.iid(gaussian_component(), n)


def uniform_cube(n: int) -> ProductMeasure:
    return ProductMeasure.iid(uniform_component(), n)


# ----------------------------------------------------------------------------
# samplers
# ----------------------------------------------------------------------------


def sample_exp_power(p: float, stream, size=None):
    """Draws with density exp(-|t|^p) / (2 Gamma(1 + 1/p)).

    Implemented as sign * Gamma(1/p)^(1/p).
    """
    if not p >= 1:
        raise ValueError("p must be at least 1")
    gen = as_generator(stream)
    mag = gen.standard_gamma(1.0 / p, size) ** (1.0 / p)
    sign = gen.integers(0, 2, size) * 2 - 1
    return sign * mag


def sample_lp_ball(ball: LpBall, stream, size=None) -> np.ndarray:
    """Uniform points of the volume-one l_p ball.

    For finite p: kappa * g / (sum |g_i|^p + Z)^(1/p) with g exponential-power
    and Z standard exponential.  For p = inf: independent uniforms on
    [-1/2, 1/2].
    """
    gen = as_generator(stream)
    shape = (ball.n,) if size is None else (int(size), ball.n)
    if ball.is_cube:
        return gen.uniform(-0.5, 0.5, shape)
    p = ball.p
    g = sample_exp_power(p, gen, shape)
    z = gen.standard_exponential(shape[:-1])
    denom = (np.sum(np.abs(g) ** p, axis=-1) + z) ** (1.0 / p)
    return ball.kappa * g / denom[..., None]


def sample_lp_ball_latent(ball: LpBall, stream, size: int):
    """Like :func:`sample_lp_ball` but also returns the latent g and Z."""
    gen = as_generator(stream)
    p = ball.p
    g = sample_exp_power(p, gen, (int(size), ball.n))
    z = gen.standard_exponential(int(size))
    denom = (np.sum(np.abs(g) ** p, axis=-1) + z) ** (1.0 / p)
    return ball.kappa * g / denom[:, None], g, z


def sample_product(mu: ProductMeasure, stream, size=None) -> np.ndarray:
    """Independent draws from each component of ``mu``."""
    gen = as_generator(stream)
    m = 1 if size is None else int(size)
    if mu.is_iid:
        out = mu.components[0].sample(gen, (m, mu.n))
    else:
        out = np.empty((m, mu.n))
        for comp, idx in mu.distinct_components():
            out[:, idx] = comp.sample(gen, (m, idx.size))
    return out[0] if size is None else out


def tilt_envelope(comp: Component1D, phi: BumpFn, R: float, grid: int = 10 ** 4) -> float:
    """max |g| over the bump support from a dense scan, times R^2."""
    from longlines.perturb import g_of

    lo, hi = phi.support
    t = np.linspace(lo, hi, grid)
    return R * R * float(np.max(np.abs(g_of(comp, phi, t))))


def sample_tilted_1d(comp: Component1D, R: float, phi: BumpFn, gen, size) -> np.ndarray:
    """Rejection sampler for the density proportional to exp(-R^2 g) rho."""
    from longlines.perturb import g_of

    out = comp.sample(gen, size)
    if R == 0:
        return out
    env = tilt_envelope(comp, phi, R)
    flat = out.reshape(-1)
    todo = np.arange(flat.size)
    tries = 0
    while todo.size:
        tries += 1
        if tries > MAX_REJECTION_TRIES:
            raise RuntimeError("tilted rejection sampler did not terminate; check g")
        cand = comp.sample(gen, todo.size) if tries > 1 else flat[todo]
        acc_prob = np.exp(-R * R * g_of(comp, phi, cand) - env)
        ok = gen.random(todo.size) < acc_prob
        flat[todo[ok]] = cand[ok]
        todo = todo[~ok]
    return flat.reshape(out.shape)


def sample_tilted_product(mu: ProductMeasure, R: float, phi: BumpFn, stream, size=None) -> np.ndarray:
    """Independent coordinates with densities kappa_R exp(-R^2 g_i) rho_i."""
    if abs(R) > 1:
        raise ValueError("|R| must be at most 1")
    gen = as_generator(stream)
    m = 1 if size is None else int(size)
    out = np.empty((m, mu.n))
    for comp, idx in mu.distinct_components():
        out[:, idx] = sample_tilted_1d(comp, R, phi, gen, (m, idx.size))
    return out[0] if size is None else out


def sample_gaussian_mixture(n: int, stream, size=None) -> np.ndarray:
    """X + U Y with X, Y standard Gaussian vectors and U uniform on [0, 1]."""
    if n < 1:
        raise ValueError("n must be positive")
    gen = as_generator(stream)
    m = 1 if size is None else int(size)
    x = gen.standard_normal((m, n))
    y = gen.standard_normal((m, n))
    u = gen.random((m, 1))
    out = x + u * y
    return out[0] if size is None else out


def simplex_scale(n: int) -> float:
    """(n!)^(1/n) / 2, which equals kappa(1, n)."""
    return math.exp(gammaln(n + 1.0) / n) / 2.0


def sample_simplex_latent(n: int, stream, size: int):
    """Uniform points of the positive part of the volume-one l_1 ball with latents.

    Returns (X, g, Z) where X_i = (n!)^(1/n) g_i / (2 (Z + sum g_j)).
    """
    gen = as_generator(stream)
    g = gen.standard_exponential((int(size), n))
    z = gen.standard_exponential(int(size))
    x = simplex_scale(n) * g / (z + g.sum(axis=1))[:, None]
    return x, g, z


def sample_simplex(n: int, stream, size=None) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    x, _, _ = sample_simplex_latent(n, stream, 1 if size is None else size)
    return x[0] if size is None else x


def measure_sampler(kind: str, n: int, p: float = 2.0):
    """Return ``f(stream, size)`` for a named measure.

    Kinds: ``lp-ball`` (uses p), ``cube``, ``gaussian``, ``mixture``, ``simplex``.
    """
    if kind == "lp-ball":
        ball = LpBall(p, n)
        return lambda stream, size=None: sample_lp_ball(ball, stream, size)
    if kind == "cube":
        ball = LpBall(math.inf, n)
        return lambda stream, size=None: sample_lp_ball(ball, stream, size)
    if kind == "gaussian":
        mu = gaussian_product(n)
        return lambda stream, size=None: sample_product(mu, stream, size)
    if kind == "mixture":
        return lambda stream, size=None: sample_gaussian_mixture(n, stream, size)
    if kind == "simplex":
        return lambda stream, size=None: sample_simplex(n, stream, size)
    raise ValueError(f"unknown measure kind {kind!r}")


__all__ = [
    "Component1D",
    "ProductMeasure",
    "gaussian_component",
    "uniform_component",
    "exponential_component",
    "gaussian_product",
    "uniform_cube",
    "sample_exp_power",
    "sample_lp_ball",
    "sample_lp_ball_latent",
    "sample_product",
    "sample_tilted_product",
    "sample_gaussian_mixture",
    "sample_simplex",
    "sample_simplex_latent",
    "simplex_scale",
    "measure_sampler",
    "kappa",
]
