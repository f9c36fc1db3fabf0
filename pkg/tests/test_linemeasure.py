"""Intersection lengths along segments and the long-line search."""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longlines.core import Segment
from longlines.linemeasure import hill_climb, max_random_line, measure_segment, sup_line_search, tangent_seeds
from longlines.rng import RandomStream, as_generator
from longlines.sets import (
    ball_shell_construction,
    box_set,
    empty_set,
    euclidean_ball_set,
    euclidean_shell,
    full_space,
    lp_shell,
)


def _uniform_box(half, n):
    return lambda s, size: as_generator(s).uniform(-half, half, (int(size), n))


def test_full_and_empty_sets():
    seg = Segment(np.zeros(4), np.ones(4), 3.0)
    full = measure_segment(full_space(4), seg, 0.01)
    assert full.fraction == 1.0 and full.length == pytest.approx(6.0)
    assert full.method == "exact"
    none = measure_segment(empty_set(4), seg, 0.01)
    assert none.fraction == 0.0 and none.length == 0.0


def test_ray_through_shell():
    # the ray from the origin along e1 with t in [0, 3] meets {1 <= |x| <= 2} in [1, 2]
    A = euclidean_shell(1.0, 2.0, 3)
    seg = Segment(np.zeros(3), np.array([1.0, 0.0, 0.0]), 3.0)
    res = measure_segment(A, seg, 1e-3)
    assert res.length == pytest.approx(1.0, abs=1e-12)
    assert res.fraction == pytest.approx(1 / 3, abs=1e-12)


@pytest.mark.parametrize("method", ["grid", "mc"])
def test_sampled_methods_agree_with_exact(method):
    A = euclidean_shell(1.0, 2.0, 3)
    grid_only = replace(A, intersector=None)
    seg = Segment(np.array([-2.5, 0.3, 0.0]), np.array([1.0, 0.0, 0.0]), 5.0)
    exact = measure_segment(A, seg, 1e-3).length
    res = measure_segment(grid_only, seg, 1e-4, RandomStream(3), method=method)
    assert res.method == method
    cells = math.ceil(seg.length / 1e-4)
    # grid error is at most one cell per boundary crossing, mc error is binomial
    tol = 4 * res.resolution if method == "grid" else 4 * seg.length * math.sqrt(0.25 / cells)
    assert res.length == pytest.approx(exact, abs=tol)


def test_auto_uses_grid_without_intersector():
    A = replace(euclidean_ball_set(1.0, 2), intersector=None)
    res = measure_segment(A, Segment(np.array([-1.0, 0.0]), np.array([1.0, 0.0]), 2.0), 0.01)
    assert res.method == "grid" and res.resolution == pytest.approx(0.01)


def test_measure_segment_validation():
    seg = Segment(np.zeros(2), np.ones(2), 1.0)
    with pytest.raises(ValueError):
        measure_segment(full_space(2), seg, 0.0)
    with pytest.raises(ValueError):
        measure_segment(replace(full_space(2), intersector=None), seg, 0.1, method="quad")


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 5), st.floats(0, 2 * math.pi))
@settings(max_examples=50, deadline=None)
def test_length_bounded_by_segment(x, y, t_max, angle):
    A = euclidean_shell(0.5, 1.5, 2)
    seg = Segment(np.array([x, y]), np.array([math.cos(angle), math.sin(angle)]), t_max)
    res = measure_segment(A, seg, 0.01)
    assert 0.0 <= res.length <= seg.length + 1e-12
    # two disjoint pieces at most, none longer than the outer chord
    assert res.length <= 3.0 + 1e-12


def test_sup_search_recovers_ball_diameter():
    n, R = 6, 1.3
    A = euclidean_ball_set(R, n, ambient=_uniform_box(R, n))
    seg, res = sup_line_search(A, 200, RandomStream(4))
    assert res.length >= 0.98 * 2 * R
    assert res.length <= 2 * R + 1e-9
    assert measure_segment(A, seg, 1e-3).length == pytest.approx(res.length, rel=1e-9)


@pytest.mark.parametrize("n,floor", [(2, 0.999), (4, 0.9)])
def test_sup_search_approaches_cube_diagonal(n, floor):
    # coordinate hill climbing takes one move per round, so in higher
    # dimension the diagonal is only approached slowly
    A = box_set(-0.5, 0.5, n)
    _, res = sup_line_search(A, 500, RandomStream(5))
    assert res.length >= floor * math.sqrt(n)
    assert res.length <= math.sqrt(n) + 1e-9


def test_sup_search_on_ball_shell_is_bounded():
    n = 32
    A = ball_shell_construction(n)
    rad = A.descriptor["radius"]
    _, res = sup_line_search(A, 300, RandomStream(6))
    # a line at distance d from the centre meets the annulus in total length
    # 2 sqrt(rad^2 - d^2) - 2 sqrt(hole^2 - d^2), which peaks at d = hole
    hole = (1 - 1 / n) * rad
    assert 0 < res.length <= 2 * math.sqrt(rad ** 2 - hole ** 2) + 1e-9


def test_sup_search_improves_with_trials():
    A = ball_shell_construction(16)
    few = sup_line_search(A, 20, RandomStream(7))[1].length
    many = sup_line_search(A, 400, RandomStream(7))[1].length
    assert many >= few


def test_sup_search_respects_seeds():
    n = 8
    A = box_set(-0.5, 0.5, n)
    diag = Segment(np.full(n, -0.5), np.ones(n), 1.0)
    _, res = sup_line_search(A, 1, RandomStream(8), seeds=[diag])
    assert res.length == pytest.approx(math.sqrt(n), rel=1e-12)


def test_sup_search_validation():
    with pytest.raises(ValueError):
        sup_line_search(box_set(0, 1, 2), 0, RandomStream(1))
    with pytest.raises(ValueError):
        sup_line_search(full_space(2), 5, RandomStream(1))


def test_hill_climb_never_loses_length():
    A = ball_shell_construction(12)
    pts = A.sample_ambient(RandomStream(9), 2)
    start = float(A.line_lengths(pts[:1], pts[1:] - pts[:1])[0])
    _, _, length = hill_climb(A, pts[0], pts[1], RandomStream(10))
    assert length >= start - 1e-12


def test_tangent_seeds_graze_the_inner_level():
    p, n = 1.5, 64
    A = lp_shell(p, n, RandomStream(11), calib_samples=20_000)
    seeds = tangent_seeds(A, 10, RandomStream(12))
    assert len(seeds) == 10
    for s in seeds:
        mid = s.origin + 0.5 * s.direction
        assert A.contains(mid)
        assert np.linalg.norm(s.direction) == pytest.approx(1.0)
        grad = A.band.deriv(mid)
        assert abs(float(grad @ s.direction)) <= 1e-9 * float(np.linalg.norm(grad))
    assert tangent_seeds(box_set(0, 1, 3), 5, RandomStream(1)) == []


def test_max_random_line_matches_direct_maximum():
    A = euclidean_ball_set(1.0, 3, ambient=_uniform_box(1.0, 3))
    value = max_random_line(A, 50, RandomStream(13))
    pts = A.sample_ambient(RandomStream(13), 100)
    direct = 0.0
    for j in range(50):
        d = pts[50 + j] - pts[j]
        iv = A.intervals(pts[j], d)
        direct = max(direct, float((iv[:, 1] - iv[:, 0]).sum()) * float(np.linalg.norm(d)))
    assert value == pytest.approx(direct, rel=1e-12)
    assert value <= 2.0
