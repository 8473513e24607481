from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from gwdiscovery import analytics as an
from gwdiscovery.discovery import (
    DepthBiased,
    Uniform,
    append_summary_csv,
    discovered_mask,
    discovered_size,
    horizon_for,
    marks_from_uniforms,
    mark_nodes,
    mc_depth_biased,
    mc_uniform,
    missed_discovery_bound,
    missed_marks_bound,
    truncation_depth,
    uniform_trial,
)
from gwdiscovery.errors import DomainError
from gwdiscovery.gw_core import build_tree
from gwdiscovery.offspring import deterministic, parse_offspring


class TestModels:
    def test_uniform_validation(self):
        with pytest.raises(DomainError):
            Uniform(-1.0, 3)
        with pytest.raises(DomainError):
            Uniform(1.0, -1)

    def test_depth_biased_validation(self):
        for alpha in (-0.1, 1.0):
            with pytest.raises(DomainError):
                DepthBiased(alpha, 2.0)
        with pytest.raises(DomainError):
            DepthBiased(0.5, 1.0)

    def test_depth_biased_probabilities(self):
        p = DepthBiased(0.5, 2.0).level_probabilities(3)
        assert np.allclose(p, 1 - np.exp(-(0.25 ** np.arange(4))), rtol=1e-15)
        assert DepthBiased(0.0, 2.0).level_probabilities(2).tolist() == [-math.expm1(-1), 0, 0]


class TestMarking:
    def test_infinite_lambda_marks_everything(self, unif13, rng):
        t = build_tree(unif13, 5, rng)
        assert mark_nodes(t, Uniform(math.inf, 5), rng).all()

    def test_zero_lambda_marks_nothing(self, unif13, rng):
        t = build_tree(unif13, 5, rng)
        assert not mark_nodes(t, Uniform(0.0, 5), rng).any()

    def test_depth_mismatch(self, det2, rng):
        with pytest.raises(DomainError):
            mark_nodes(build_tree(det2, 3, rng), Uniform(1.0, 4), rng)

    def test_root_selected_flag(self, det2, rng):
        t = build_tree(det2, 3, rng)
        assert mark_nodes(t, Uniform(0.0, 3), rng, root_selected=True)[0]

    def test_depth_biased_level_frequencies(self, det2):
        t = build_tree(det2, 4, np.random.default_rng(0))
        model = DepthBiased(0.5, 2.0)
        rng = np.random.default_rng(1)
        reps = 20_000
        counts = np.zeros(5)
        for _ in range(reps):
            marks = mark_nodes(t, model, rng)
            counts += np.add.reduceat(marks, t.level_offsets[:-1].astype(int))
        freq = counts / (reps * t.level_sizes)
        expected = 1 - np.exp(-(0.25 ** np.arange(5)))
        se = np.sqrt(expected * (1 - expected) / (reps * t.level_sizes))
        assert np.all(np.abs(freq - expected) <= 4 * se + 1e-12)


class TestDiscoveredSize:
    def test_no_marks(self, det2, rng):
        t = build_tree(det2, 3, rng)
        assert discovered_size(t, np.zeros(t.n_nodes, bool)) == 0

    def test_root_only(self, det2, rng):
        t = build_tree(det2, 3, rng)
        marks = np.zeros(t.n_nodes, bool)
        marks[0] = True
        assert discovered_size(t, marks) == 1

    def test_single_leaf(self, det2, rng):
        t = build_tree(det2, 2, rng)
        marks = np.zeros(7, bool)
        marks[5] = True
        assert discovered_size(t, marks) == 3

    def test_shape_check(self, det2, rng):
        with pytest.raises(DomainError):
            discovered_size(build_tree(det2, 2, rng), np.zeros(3, bool))

    def test_ancestor_closure(self, unif13, rng):
        for _ in range(50):
            t = build_tree(unif13, 6, rng)
            hit = discovered_mask(t, rng.random(t.n_nodes) < 0.05)
            children = np.arange(1, t.n_nodes)
            assert np.all(hit[t.parent[hit[children]]])

    def test_monotone_in_lambda_with_coupled_uniforms(self, unif13, rng):
        t = build_tree(unif13, 7, rng)
        u = rng.random(t.n_nodes)
        sizes = [
            discovered_size(t, marks_from_uniforms(t, Uniform(lam, 7), u))
            for lam in (0.0, 0.001, 0.01, 0.1, 0.5, 2.0, math.inf)
        ]
        assert sizes[0] == 0 and sizes[-1] == t.n_nodes
        assert all(b >= a for a, b in zip(sizes, sizes[1:]))


class TestTruncation:
    def test_examples(self):
        assert truncation_depth(0.5, 0.5) == 1
        assert truncation_depth(0.9, 1e-3) == 87
        assert truncation_depth(0.5, 1.0) == 0
        assert truncation_depth(0.3, 0.3 / 0.7) == 0

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 0.8, 0.95, 0.999])
    @pytest.mark.parametrize("eps", [1e-1, 1e-4, 1e-9])
    def test_minimal(self, alpha, eps):
        D = truncation_depth(alpha, eps)
        assert missed_marks_bound(alpha, D) <= eps
        assert D == 0 or missed_marks_bound(alpha, D - 1) > eps

    @pytest.mark.parametrize("args", [(0.0, 0.1), (1.0, 0.1), (0.5, 0.0)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            truncation_depth(*args)

    def test_alpha_zero_horizon(self):
        assert horizon_for(0.0, 1e-3) == 0

    def test_missed_discovery_bound_is_series_tail(self):
        alpha, D = 0.7, 5
        direct = math.fsum((i + 1) * alpha**i for i in range(D + 1, 2000))
        assert missed_discovery_bound(alpha, D) == pytest.approx(direct, rel=1e-12)


class TestUniformCampaign:
    def test_saturated(self, unif13):
        s = mc_uniform(unif13, 6, 50.0, 20, seed=1)
        assert s.rho_hat == 1.0

    def test_deterministic_tree_size(self, det2):
        s = mc_uniform(det2, 10, 0.1, 20, seed=2)
        assert s.mean_T == 2047.0 and np.all(s.T == 2047)

    def test_matches_series_at_depth_16(self, det2):
        s = mc_uniform(det2, 16, 0.1, 200, seed=3)
        rho = an.rho_series(det2, 0.1).value
        assert abs(s.rho_hat - rho) <= 3 * s.se_rho + 2 * 2.0**-17

    def test_mean_marks(self, unif13):
        s = mc_uniform(unif13, 6, 0.3, 3000, seed=4)
        expected = -math.expm1(-0.3) * an.expected_tree_size(2.0, 6)
        se = s.marks.std(ddof=1) / math.sqrt(s.replicas)
        assert abs(s.mean_marks - expected) <= 3 * se

    def test_matches_finite_depth_mean(self, unif13):
        s = mc_uniform(unif13, 5, 0.2, 4000, seed=5)
        assert abs(s.mean_R - an.expected_discovered(unif13, 0.2, 5)) <= 3 * s.se_R

    def test_needs_two_replicas(self, det2):
        with pytest.raises(DomainError):
            mc_uniform(det2, 3, 0.1, 1, seed=0)

    def test_trial_invariants(self, unif13):
        for i in range(200):
            out = uniform_trial(unif13, 5, 0.05, seed=6, index=i)
            assert 0 <= out.discovered <= out.total
            assert (out.marks == 0) == (out.discovered == 0)

    def test_root_selected_counts_root(self, det2):
        s = mc_uniform(det2, 4, 0.0, 10, seed=7, root_selected=True)
        assert np.all(s.R == 1)

    def test_reproducible(self, unif13):
        a = mc_uniform(unif13, 5, 0.1, 50, seed=8)
        b = mc_uniform(unif13, 5, 0.1, 50, seed=8, workers=2)
        assert np.array_equal(a.R, b.R) and np.array_equal(a.T, b.T)


class TestDepthBiasedCampaign:
    def test_alpha_zero(self, det2):
        s = mc_depth_biased(det2, 0.0, 1e-3, 20_000, seed=1)
        assert s.depth == 0
        assert abs(s.mean_R - (1 - math.exp(-1))) <= 3 * s.se_R

    def test_no_marks_means_nothing_discovered(self, unif13):
        for engine in ("arena", "skeleton"):
            s = mc_depth_biased(unif13, 0.5, 1e-3, 2000, seed=2, engine=engine)
            assert np.all((s.marks == 0) == (s.R == 0))

    def test_mean_marks_matches_level_sum(self, det2):
        s = mc_depth_biased(det2, 0.8, 1e-3, 10_000, seed=3)
        n = np.arange(s.depth + 1)
        expected = math.fsum(2.0**n * -np.expm1(-((0.8 / 2) ** n)))
        assert abs(s.mean_marks - expected) <= 3 * s.se_marks

    @pytest.mark.parametrize("engine", ["arena", "skeleton"])
    def test_engines_match_exact_recursion(self, unif13, engine):
        alpha, eps = 0.5, 1e-4
        D = truncation_depth(alpha, eps)
        p = DepthBiased(alpha, 2.0).level_probabilities(D)
        psi = an.subtree_hit_probabilities(unif13, p)
        truncated = math.fsum(2.0**n * psi[n] for n in range(D + 1))
        s = mc_depth_biased(unif13, alpha, eps, 8000, seed=4, engine=engine)
        assert abs(s.mean_R - truncated) <= 3 * s.se_R

    def test_engines_agree_on_selection_law(self, unif13):
        a = mc_depth_biased(unif13, 0.6, 1e-3, 8000, seed=5, engine="arena")
        b = mc_depth_biased(unif13, 0.6, 1e-3, 8000, seed=6, engine="skeleton")
        se = math.hypot(a.se_marks, b.se_marks)
        assert abs(a.mean_marks - b.mean_marks) <= 4 * se

    def test_auto_engine(self, det2):
        assert mc_depth_biased(det2, 0.5, 1e-3, 10, seed=1).engine == "arena"
        assert mc_depth_biased(det2, 0.8, 1e-3, 10, seed=1).engine == "skeleton"

    def test_root_selected(self, unif13):
        for engine in ("arena", "skeleton"):
            s = mc_depth_biased(unif13, 0.5, 1e-3, 200, seed=7, engine=engine, root_selected=True)
            assert np.all(s.R >= 1) and np.all(s.marks >= 1)

    def test_reports_bounds(self, det2):
        s = mc_depth_biased(det2, 0.8, 1e-3, 10, seed=1)
        assert s.missed_marks_bound <= 1e-3
        assert s.missed_discovery_bound == missed_discovery_bound(0.8, s.depth)

    def test_bad_engine(self, det2):
        with pytest.raises(DomainError):
            mc_depth_biased(det2, 0.5, 1e-3, 10, seed=1, engine="fast")


def test_summary_csv_appends_with_single_header(det2, tmp_path):
    path = tmp_path / "runs.csv"
    append_summary_csv(mc_uniform(det2, 3, 0.1, 5, seed=1), path)
    append_summary_csv(mc_depth_biased(parse_offspring("1:0.5,3:0.5"), 0.5, 0.1, 5, seed=1), path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == [
        "model", "dist", "param", "N_or_D", "replicas", "mean_R", "se_R",
        "var_R", "mean_T", "mean_marks", "rho_or_ratio", "se",
    ]
    assert len(rows) == 3
    assert rows[2][1] == "1:0.5,3:0.5"
    assert rows[1][2] == "1.00000000000000006e-01"
