"""Certified long line intersections from random perturbation segments.

Each trial draws a base point ``x`` and the random signs of a scheme, and
follows the straight segment ``x + u d`` for ``u`` in [0, 1] along which the
scheme moves ``x``.  The fraction of a uniform grid of ``u`` values whose
points lie in the set certifies ``fraction * |d|`` of one-dimensional
measure on that line, up to the grid resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from longlines.core import LpBall, Segment, a_tilde, psi_bump
from longlines.perturb import (
    DEFAULT_EPS,
    GaussianScheme,
    HighPScheme,
    LowPScheme,
    ProductScheme,
    Scheme,
    SimplexScheme,
)
from longlines.rng import RandomStream
from longlines.samplers import (
    gaussian_product,
    sample_lp_ball,
    sample_product,
    sample_simplex_latent,
    sample_tilted_product,
    simplex_scale,
    uniform_cube,
)
from longlines.sets import MembershipSet

DEFAULT_U_GRID = 256
MIN_U_GRID = 16
PILOT_DRAWS = 1000
FLOOR_QUANTILE = 0.10
MAX_RESAMPLES = 10 ** 4


# ----------------------------------------------------------------------------
# regimes and default parameters
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class FinderConstants:
    """Numeric constants left unspecified by the asymptotic theory.

    :param eps: the small constant of the l_p schemes
    :param c_tilde: density-bound constant of the small-mass product scheme
    :param c_large: prefactor of r for the large-mass product scheme
    :param c_gauss: prefactor of r for the Gaussian direction scheme
    :param R_scale: multiplies the high-p frequency n^(1/(2p+1))
    :param c1: prefactor of R2 in the pair scheme
    :param simplex_c: r = simplex_c * eps * n^(-1/4) for the simplex scheme
    :param psi_shape: ``exp`` or ``poly`` window bump
    """

    eps: float = DEFAULT_EPS
    c_tilde: float = 1.0
    c_large: float = 0.5
    c_gauss: float = 0.5
    R_scale: float = 1.0
    c1: float = 0.01
    simplex_c: float = 1.0
    psi_shape: str = "exp"


@dataclass(frozen=True)
class Regime:
    """Which measure a scaling experiment lives on.

    ``kind`` is one of ``lp`` (with ``p``), ``cube``, ``gaussian``,
    ``gaussian-product``, ``mixture`` or ``simplex``.
    """

    kind: str
    p: float = math.inf

    @classmethod
    def parse(cls, value: Union[str, float, "Regime"]) -> "Regime":
        if isinstance(value, Regime):
            return value
        if isinstance(value, (int, float)):
            p = float(value)
            return cls("cube") if math.isinf(p) else cls("lp", p)
        text = str(value).strip().lower()
        if text in ("inf", "infinity", "cube"):
            return cls("cube")
        if text in ("gaussian", "gaussian-product", "mixture", "simplex"):
            return cls(text, 1.0 if text == "simplex" else math.inf)
        try:
            return cls.parse(float(text))
        except ValueError:
            raise ValueError(f"unknown regime {value!r}") from None

    def label(self) -> str:
        return f"p={self.p:g}" if self.kind == "lp" else self.kind


def default_params(regime, n: int, a: float = 0.5, constants: Optional[FinderConstants] = None) -> Scheme:
    """The scheme a lower-bound argument uses for ``regime`` in dimension ``n``.

    * cube and Gaussian product: r = R = n^(-1/4) / (2 c_tilde)^(1/4) for
      a <= 1/2 (the finder mixes R = 0 and R = r trials), and
      r = c_large n^(-1/4) |log(1 - a)|^(1/4), R = 0 above 1/2;
    * gaussian: a Gaussian direction with r = c_gauss n^(-1/4);
    * mixture: a Gaussian direction with r = 1;
    * 2 <= p < inf: R = R_scale n^(1/(2p+1)), r = eps^2 R^(-3/4) n^(-1/4);
    * 1 < p < 2: R1 = log n, R2 = max(1, c1 log^(1/p) n) and
      r0 = eps R1 R2^(p/2) n^(c1^p / a_n^p) n^(-1/2), reduced if needed so
      that the scheme's constraints hold;
    * p = 1 and simplex: r = simplex_c eps n^(-1/4).
    """
    c = constants or FinderConstants()
    reg = Regime.parse(regime)
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    if n < 2:
        raise ValueError("n must be at least 2")
    psi = psi_bump(c.psi_shape)
    if reg.kind in ("cube", "gaussian-product"):
        mu = uniform_cube(n) if reg.kind == "cube" else gaussian_product(n)
        if a <= 0.5:
            r = n ** -0.25 / (2.0 * c.c_tilde) ** 0.25
            return ProductScheme(mu, min(r, 1.0), min(r, 1.0))
        r = c.c_large * n ** -0.25 * abs(math.log(1.0 - a)) ** 0.25
        return ProductScheme(mu, min(r, 1.0), 0.0)
    if reg.kind == "gaussian":
        return GaussianScheme(n, c.c_gauss * n ** -0.25)
    if reg.kind == "mixture":
        return GaussianScheme(n, 1.0, mixture=True)
    if reg.kind == "simplex" or (reg.kind == "lp" and reg.p == 1.0):
        return SimplexScheme(n, c.simplex_c * c.eps * n ** -0.25, psi, signed=reg.kind == "lp")
    p = reg.p
    if p >= 2.0:
        R = min(c.R_scale * n ** (1.0 / (2.0 * p + 1.0)), math.sqrt(n))
        r = c.eps ** 2 * R ** -0.75 * n ** -0.25
        return HighPScheme(LpBall(p, n), r, R, psi, eps=c.eps)
    if 1.0 < p < 2.0:
        logn = math.log(n)
        R1 = logn
        R2 = max(1.0, c.c1 * logn ** (1.0 / p))
        an = a_tilde(p, n)
        r = c.eps * R1 * R2 ** (p / 2.0) * n ** (c.c1 ** p / an ** p) * n ** -0.5
        # largest r allowed by the two r-constraints
        cap_tv = c.eps * R1 * R2 ** (p / 2.0) * math.exp(R2 ** p / an ** p) / math.sqrt(n)
        cap_pow = n ** -0.4
        r = min(r, cap_tv, cap_pow, 0.999)
        return LowPScheme(LpBall(p, n), r, R1, R2, psi, eps=c.eps)
    raise ValueError(f"no scheme for regime {reg.label()}")


# ----------------------------------------------------------------------------
# trial draws
# ----------------------------------------------------------------------------


def _signs(gen, shape):
    return gen.integers(0, 2, shape) * 2.0 - 1.0


def draw_direction(scheme: Scheme, stream: RandomStream, tilt_choice: Optional[bool] = None):
    """One trial: the base point ``x`` and the segment direction ``d``.

    Returns (x, d, resamples).  For the pair scheme ``resamples`` counts the
    base points drawn until one had an active pair; ``d`` is all zeros when
    none was found within the resample cap.
    """
    gen = stream.generator()
    if isinstance(scheme, ProductScheme):
        R = scheme.R
        if tilt_choice is None:
            tilt_choice = bool(gen.integers(0, 2)) if R > 0 else False
        x = (sample_tilted_product(scheme.mu, R, scheme.phi, gen) if tilt_choice
             else sample_product(scheme.mu, gen))
        d = scheme.r * _signs(gen, scheme.n) * np.asarray(scheme.phi(x))
        return x, d, 0
    if isinstance(scheme, GaussianScheme):
        x = gen.standard_normal(scheme.n)
        d = scheme.r * gen.standard_normal(scheme.n)
        return x, d, 0
    if isinstance(scheme, HighPScheme):
        x = sample_lp_ball(scheme.ball, gen)
        d = scheme.phi(x) * _signs(gen, scheme.n)
        return x, d, 0
    if isinstance(scheme, SimplexScheme):
        xs, g, z = sample_simplex_latent(scheme.n, gen, 1)
        x, g, z = xs[0], g[0], float(z[0])
        delta = _signs(gen, scheme.n)
        big_p = z + g.sum()
        psi_d = np.asarray(scheme.psi(g)) * delta
        w = psi_d - (psi_d.sum() / big_p) * g
        d = simplex_scale(scheme.n) * scheme.r * w / big_p
        if scheme.signed:
            s = _signs(gen, scheme.n)
            x, d = s * x, s * d
        return x, d, 0
    if isinstance(scheme, LowPScheme):
        pm = scheme.pair_map
        k = scheme.n // 2
        lo, hi = pm.support
        batch = 64
        used = 0
        while used < MAX_RESAMPLES:
            m = min(batch, MAX_RESAMPLES - used)
            X = sample_lp_ball(scheme.ball, gen, m)
            x1, x2 = X[:, 0:2 * k:2], X[:, 1:2 * k:2]
            act = ((x1 > lo) & (x1 < hi) & (x2 > lo) & (x2 < hi)).any(axis=1)
            hits = np.flatnonzero(act)
            if hits.size:
                j = int(hits[0])
                used += j + 1
                x = X[j]
                delta = _signs(gen, k)
                h1, h2 = pm.h(x[0:2 * k:2], x[1:2 * k:2])
                d = np.zeros(scheme.n)
                d[0:2 * k:2] = delta * h1
                d[1:2 * k:2] = delta * h2
                return x, d, used
            used += m
        return X[-1], np.zeros(scheme.n), used
    raise TypeError(f"unknown scheme {type(scheme).__name__}")


def u_grid_points(u_grid: int) -> np.ndarray:
    """Midpoints of ``u_grid`` equal cells of [0, 1]."""
    return (np.arange(u_grid) + 0.5) / u_grid


def grid_fraction(A: MembershipSet, x: np.ndarray, d: np.ndarray, u_grid: int) -> float:
    """Fraction of the grid points x + u d that lie in A."""
    pts = x[None, :] + u_grid_points(u_grid)[:, None] * d[None, :]
    return float(np.count_nonzero(A.contains(pts))) / u_grid


# ----------------------------------------------------------------------------
# certificates
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class LineCertificate:
    """A segment together with the measured fraction of it lying in a set.

    ``segment`` is None for a degenerate trial (no direction found); then
    ``fraction`` records whether the base point itself lies in the set.
    """

    segment: Optional[Segment]
    fraction: float
    certified_length: float
    scheme: dict
    seed: str
    trial: int
    u_grid: int
    trials_kept: int = 0
    norm_floor: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def segment_length(self) -> float:
        return 0.0 if self.segment is None else self.segment.length

    def to_record(self, include_points: bool = False) -> dict:
        rec = {
            "fraction": self.fraction,
            "certified_length": self.certified_length,
            "segment_length": self.segment_length,
            "scheme": self.scheme,
            "seed": self.seed,
            "trial": self.trial,
            "u_grid": self.u_grid,
            "trials_kept": self.trials_kept,
            "norm_floor": self.norm_floor,
            **self.extra,
        }
        if include_points and self.segment is not None:
            rec["segment"] = self.segment.to_record()
        return rec


def norm_floor(scheme: Scheme, stream: RandomStream, draws: int = PILOT_DRAWS,
               quantile: float = FLOOR_QUANTILE) -> float:
    """Lower ``quantile`` of |d| over ``draws`` pilot trials."""
    norms = np.empty(draws)
    for j in range(draws):
        _, d, _ = draw_direction(scheme, stream.split(j))
        norms[j] = float(np.linalg.norm(d))
    return float(np.quantile(norms, quantile))


def _certificate(A, x, d, u_grid, scheme, sub, j, kept, floor, extra=None) -> LineCertificate:
    if not np.any(d):
        frac = 1.0 if A.contains(x) else 0.0
        return LineCertificate(None, frac, 0.0, scheme.descriptor(), sub.label(), j, u_grid, kept, floor,
                               extra or {})
    seg = Segment(x, d, 1.0)
    frac = grid_fraction(A, x, d, u_grid)
    return LineCertificate(seg, frac, frac * seg.length, scheme.descriptor(), sub.label(), j, u_grid,
                           kept, floor, extra or {})


def find_long_line(A: MembershipSet, scheme: Scheme, trials: int, u_grid: int = DEFAULT_U_GRID,
                   stream: Optional[RandomStream] = None, pilot_draws: int = PILOT_DRAWS,
                   collect: Optional[list] = None) -> LineCertificate:
    """Best certificate over ``trials`` perturbation segments.

    Trial j uses the substream ``stream.split(1, j)``; the norm floor comes
    from ``pilot_draws`` draws on ``stream.split(0)``.  Trials whose
    direction is shorter than the floor are skipped.  Ties go to the
    earliest trial.  If every trial is skipped, the best skipped trial is
    returned and ``trials_kept`` is 0.  When ``collect`` is a list, every
    trial's certificate is appended to it.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if u_grid < MIN_U_GRID:
        raise ValueError(f"u_grid must be at least {MIN_U_GRID}")
    if A.n != _scheme_dim(scheme):
        raise ValueError("set and scheme dimensions differ")
    st = stream if stream is not None else RandomStream(0)
    floor = norm_floor(scheme, st.split(0), pilot_draws) if pilot_draws > 0 else 0.0
    best: Optional[LineCertificate] = None
    fallback: Optional[LineCertificate] = None
    kept = 0
    for j in range(trials):
        sub = st.split(1, j)
        x, d, resamples = draw_direction(scheme, sub)
        extra = {"resamples": resamples} if isinstance(scheme, LowPScheme) else None
        cert = _certificate(A, x, d, u_grid, scheme, sub, j, 0, floor, extra)
        if collect is not None:
            collect.append(cert)
        if float(np.linalg.norm(d)) < floor:
            if fallback is None or cert.certified_length > fallback.certified_length:
                fallback = cert
            continue
        kept += 1
        if best is None or cert.certified_length > best.certified_length:
            best = cert
    chosen = best if best is not None else fallback
    return _with_kept(chosen, kept)


def _with_kept(cert: LineCertificate, kept: int) -> LineCertificate:
    return LineCertificate(cert.segment, cert.fraction, cert.certified_length, cert.scheme, cert.seed,
                           cert.trial, cert.u_grid, kept, cert.norm_floor, cert.extra)


def replay_certificate(A: MembershipSet, scheme: Scheme, cert: LineCertificate) -> LineCertificate:
    """Redraw the certificate's trial from its seed label and re-measure it."""
    sub = RandomStream.from_label(cert.seed)
    x, d, resamples = draw_direction(scheme, sub)
    extra = {"resamples": resamples} if isinstance(scheme, LowPScheme) else None
    out = _certificate(A, x, d, cert.u_grid, scheme, sub, cert.trial, cert.trials_kept, cert.norm_floor,
                       extra)
    return out


def _scheme_dim(scheme: Scheme) -> int:
    return scheme.n


__all__ = [
    "FinderConstants",
    "Regime",
    "LineCertificate",
    "default_params",
    "draw_direction",
    "find_long_line",
    "replay_certificate",
    "norm_floor",
    "grid_fraction",
    "u_grid_points",
    "DEFAULT_U_GRID",
]
