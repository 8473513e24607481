from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from gwdiscovery import analytics as an
from gwdiscovery.discovery import discovered_mask, discovered_size, missed_marks_bound, truncation_depth
from gwdiscovery.gw_core import build_tree
from gwdiscovery.offspring import make_offspring, size_biased


@st.composite
def offspring_laws(draw, max_k=5):
    ks = draw(st.lists(st.integers(1, max_k), min_size=1, max_size=4, unique=True))
    weights = draw(st.lists(st.integers(1, 20), min_size=len(ks), max_size=len(ks)))
    if ks == [1]:
        ks, weights = [1, 2], [1, 1]
    return make_offspring(zip(ks, weights), normalize=True)


unit = st.floats(0.0, 1.0, allow_nan=False)


@given(offspring_laws(), unit, unit)
def test_pgf_monotone_convex_and_normalized(dist, a, b):
    s, t = sorted((a, b))
    assert dist.pgf(1.0) == 1.0 or abs(dist.pgf(1.0) - 1.0) < 1e-15
    assert dist.pgf(s) <= dist.pgf(t) + 1e-15
    mid = 0.5 * (s + t)
    assert dist.pgf(mid) <= 0.5 * (dist.pgf(s) + dist.pgf(t)) + 1e-14


@given(offspring_laws(), st.floats(0.0, 1.0))
def test_complement_pgf_agrees_with_pgf(dist, x):
    assert abs(dist.complement_pgf(x) - (1 - dist.pgf(1 - x))) < 1e-14


@given(offspring_laws())
def test_size_biased_mean(dist):
    assert abs(size_biased(dist).m - dist.g2 / dist.m) < 1e-12 * dist.g2


def _brute_discovered(tree, marks):
    hit = np.zeros(tree.n_nodes, bool)
    for j in np.flatnonzero(marks):
        v = int(j)
        while not hit[v]:
            hit[v] = True
            if v == 0:
                break
            v = tree.parent_of(v)
    return hit


@settings(max_examples=60, deadline=None)
@given(offspring_laws(max_k=3), st.integers(0, 5), st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_discovered_set_matches_path_union(dist, depth, seed, density):
    rng = np.random.default_rng(seed)
    tree = build_tree(dist, depth, rng)
    marks = rng.random(tree.n_nodes) < density
    hit = discovered_mask(tree, marks)
    assert np.array_equal(hit, _brute_discovered(tree, marks))
    assert np.all(hit[tree.parent[hit[1:]]])
    size = discovered_size(tree, marks)
    assert marks.sum() <= size <= tree.n_nodes
    assert (size == 0) == (not marks.any())


@settings(max_examples=40, deadline=None)
@given(offspring_laws(), st.floats(1e-4, 5.0), st.floats(1e-4, 5.0))
def test_rho_in_unit_interval_and_increasing(dist, a, b):
    lo, hi = sorted((a, b))
    r_lo = an.rho_series(dist, lo, tol=1e-10).value
    r_hi = an.rho_series(dist, hi, tol=1e-10).value
    assert 0.0 < r_lo <= r_hi + 1e-9 and r_hi < 1.0


@given(st.floats(0.01, 0.999), st.floats(1e-12, 10.0))
def test_truncation_depth_minimal(alpha, eps):
    D = truncation_depth(alpha, eps)
    assert missed_marks_bound(alpha, D) <= eps
    assert D == 0 or missed_marks_bound(alpha, D - 1) > eps


@settings(max_examples=40, deadline=None)
@given(offspring_laws(), st.floats(1e-6, 3.0), st.integers(1, 30))
def test_laplace_values_decrease_in_depth(dist, lam, n):
    L = an.laplace_values(dist, lam, n)
    c = an.laplace_complements(dist, lam, n)
    assert np.all(np.diff(L) <= 1e-15)
    assert np.all((L >= 0) & (L < 1))
    assert np.allclose(L + c, 1.0, atol=1e-14)
