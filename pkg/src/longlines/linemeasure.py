"""Length of a set along segments and lines, and a search for long lines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from longlines.core import Segment
from longlines.rng import RandomStream, as_generator
from longlines.sets import MembershipSet

HILL_ROUNDS = 20
HILL_STEP = 0.1
HILL_COORDS = 16
FALLBACK_CELLS = 256


@dataclass(frozen=True)
class LineMeasureResult:
    length: float
    fraction: float
    method: str
    resolution: float

    def to_record(self) -> dict:
        return {"length": self.length, "fraction": self.fraction, "method": self.method,
                "resolution": self.resolution}


def _grid_fraction(A: MembershipSet, seg: Segment, cells: int, gen) -> float:
    t = (np.arange(cells) + gen.random(cells)) / cells * seg.t_max
    return float(np.count_nonzero(A.contains(seg.points(t)))) / cells


def measure_segment(A: MembershipSet, seg: Segment, step: float, stream=None,
                    method: str = "auto") -> LineMeasureResult:
    """Length of ``A`` along ``seg``.

    With an exact intersector the parameter intervals are clipped to
    [0, t_max].  Otherwise the segment is cut into cells of length ``step``
    and one uniform point per cell is tested (stratified sampling); with
    ``method="mc"`` the same number of points is drawn uniformly instead.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    L = seg.length
    if not L > 0:
        raise ValueError("zero-length segment")
    if method == "auto":
        method = "exact" if A.has_intersector else "grid"
    if method == "exact":
        iv = A.intervals(seg.origin, seg.direction)
        lo = np.clip(iv[:, 0], 0.0, seg.t_max)
        hi = np.clip(iv[:, 1], 0.0, seg.t_max)
        frac = float(np.clip(hi - lo, 0.0, None).sum()) / seg.t_max
        frac = min(max(frac, 0.0), 1.0)
        return LineMeasureResult(frac * L, frac, "exact", 0.0)
    gen = as_generator(stream if stream is not None else RandomStream(0))
    cells = max(1, math.ceil(L / step))
    if method == "grid":
        frac = _grid_fraction(A, seg, cells, gen)
    elif method == "mc":
        t = gen.random(cells) * seg.t_max
        frac = float(np.count_nonzero(A.contains(seg.points(t)))) / cells
    else:
        raise ValueError(f"unknown method {method!r}")
    return LineMeasureResult(frac * L, frac, method, L / cells)


# ----------------------------------------------------------------------------
# sup search
# ----------------------------------------------------------------------------


class _LineScorer:
    """Scores lines through point pairs (a, b) by their intersection length."""

    def __init__(self, A: MembershipSet, gen):
        self.A = A
        self.gen = gen

    def scores(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = b - a
        if self.A.has_intersector:
            return self.A.line_lengths(a, d)
        out = np.empty(a.shape[0])
        for j in range(a.shape[0]):
            if not np.any(d[j]):
                out[j] = 0.0
                continue
            seg = Segment(a[j], d[j], 1.0)
            out[j] = _grid_fraction(self.A, seg, FALLBACK_CELLS, self.gen) * seg.length
        return out

    def anchor(self, a: np.ndarray, b: np.ndarray):
        """Replace (a, b) by the endpoints of the hull of the line's intersection."""
        if not self.A.has_intersector:
            return a, b
        d = b - a
        iv = self.A.intervals(a, d)
        if iv.shape[0] == 0:
            return a, b
        t0, t1 = float(iv[0, 0]), float(iv[-1, 1])
        if not (math.isfinite(t0) and math.isfinite(t1)) or t1 - t0 <= 0:
            return a, b
        return a + t0 * d, a + t1 * d


def hill_climb(A: MembershipSet, a: np.ndarray, b: np.ndarray, stream, rounds: int = HILL_ROUNDS,
               coords: int = HILL_COORDS):
    """Coordinate-wise endpoint hill climbing of the line through a and b.

    The step starts at 0.1 |b - a| and halves every round.  Each round tries
    moving either endpoint by +/- step along ``coords`` random coordinates
    and keeps the best improving move.  Returns (a, b, length).
    """
    gen = as_generator(stream)
    scorer = _LineScorer(A, gen)
    a, b = scorer.anchor(np.array(a, dtype=float), np.array(b, dtype=float))
    best = float(scorer.scores(a[None], b[None])[0])
    n = a.size
    step = HILL_STEP * float(np.linalg.norm(b - a))
    k = min(n, coords)
    for _ in range(rounds):
        if step <= 0:
            break
        idx = gen.choice(n, size=k, replace=False)
        cand_a = np.repeat(a[None], 4 * k, axis=0)
        cand_b = np.repeat(b[None], 4 * k, axis=0)
        rows = np.arange(k)
        cand_a[rows, idx] += step
        cand_a[k + rows, idx] -= step
        cand_b[2 * k + rows, idx] += step
        cand_b[3 * k + rows, idx] -= step
        sc = scorer.scores(cand_a, cand_b)
        j = int(np.argmax(sc))
        if sc[j] > best:
            a, b = scorer.anchor(cand_a[j], cand_b[j])
            best = max(float(sc[j]), float(scorer.scores(a[None], b[None])[0]))
        step *= 0.5
    return a, b, best


def _result_segment(A: MembershipSet, a, b, length: float, gen):
    d = b - a
    if not np.any(d):
        d = np.zeros_like(a)
        d[0] = 1e-12
    seg = Segment(a, d, 1.0)
    frac = min(1.0, length / seg.length) if seg.length > 0 else 0.0
    method = "exact" if A.has_intersector else "grid"
    res = 0.0 if A.has_intersector else seg.length / FALLBACK_CELLS
    return seg, LineMeasureResult(float(length), float(frac), method, res)


def sup_line_search(A: MembershipSet, trials: int, stream, seeds: Optional[Sequence[Segment]] = None,
                    rounds: int = HILL_ROUNDS, coords: int = HILL_COORDS):
    """Search for a line meeting ``A`` in a long set.

    Proposals are the lines of the ``seeds`` segments followed by lines
    through ``trials`` pairs of ambient samples.  Walking through the
    proposals in order, every proposal whose raw length beats all earlier
    raw lengths is refined by :func:`hill_climb`.  The best refined line is
    returned as (segment spanning its intersection, result).  Because the
    walk is sequential, a run with more trials can only do better than a run
    with fewer trials on the same stream.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    st = stream if isinstance(stream, RandomStream) else None
    gen = as_generator(stream)
    scorer = _LineScorer(A, gen)
    seeds = list(seeds or [])
    pa, pb = [], []
    for s in seeds:
        pa.append(s.origin)
        pb.append(s.origin + s.t_max * s.direction)
    if A.ambient is None:
        raise ValueError("sup_line_search needs an ambient sampler")
    pair_stream = st.split(0) if st is not None else gen
    pts = A.sample_ambient(pair_stream, 2 * trials)
    a_all = np.concatenate([np.asarray(pa).reshape(-1, A.n), pts[:trials]])
    b_all = np.concatenate([np.asarray(pb).reshape(-1, A.n), pts[trials:]])
    raw = scorer.scores(a_all, b_all)
    best_len, best_a, best_b = -1.0, a_all[0], b_all[0]
    record = -1.0
    for j in range(a_all.shape[0]):
        if raw[j] <= record:
            continue
        record = raw[j]
        sub = st.split(1, j) if st is not None else gen
        a, b, length = hill_climb(A, a_all[j], b_all[j], sub, rounds=rounds, coords=coords)
        if length > best_len:
            best_len, best_a, best_b = length, a, b
    return _result_segment(A, best_a, best_b, max(best_len, 0.0), gen)


def tangent_seeds(A: MembershipSet, count: int, stream, pool: int = 4096, flat_share: float = 0.25,
                  inner_share: float = 0.05) -> list:
    """Near-tangent candidate lines for a set with a separable band.

    From ``pool`` ambient points inside A, the ``inner_share`` closest to the
    inner level are used as tangency points.  Each direction is Gaussian on
    the ``flat_share`` of coordinates where f'' is smallest, projected to be
    orthogonal to the gradient of sum f there.  Such a line grazes the inner
    level surface where the band is least curved.  Returns segments spanning
    unit parameter length around each tangency point.
    """
    band = A.band
    if band is None or A.ambient is None or count < 1:
        return []
    st = stream if isinstance(stream, RandomStream) else None
    gen = as_generator(st.split(0) if st is not None else stream)
    X = A.sample_ambient(gen, pool)
    X = X[A.contains(X)]
    if X.shape[0] == 0:
        return []
    level = band.value(X).sum(axis=1)
    keep = max(1, min(X.shape[0], math.ceil(inner_share * X.shape[0])))
    order = np.argsort(level - band.lo)[:keep]
    n = A.n
    m = max(2, math.ceil(flat_share * n))
    out = []
    for j in range(count):
        x = X[order[j % keep]]
        curv = band.second(x)
        idx = np.argsort(curv, kind="stable")[:m]
        v = np.zeros(n)
        v[idx] = gen.standard_normal(m)
        grad = np.zeros(n)
        grad[idx] = band.deriv(x[idx])
        gg = float(grad @ grad)
        if gg > 0:
            v -= (float(v @ grad) / gg) * grad
        norm = float(np.linalg.norm(v))
        if norm == 0:
            continue
        v /= norm
        out.append(Segment(x - 0.5 * v, v, 1.0))
    return out


def max_random_line(A: MembershipSet, lines: int, stream) -> float:
    """Largest exact intersection over lines through random ambient pairs."""
    gen = as_generator(stream)
    pts = A.sample_ambient(gen, 2 * lines)
    return float(np.max(A.line_lengths(pts[:lines], pts[lines:] - pts[:lines])))


__all__ = [
    "LineMeasureResult",
    "measure_segment",
    "hill_climb",
    "sup_line_search",
    "max_random_line",
    "tangent_seeds",
]
