from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mivor.design import MonteCarloPool, mc_pool, rng_stream
from mivor.errors import ContractViolationError
from mivor.mipt import mipt_score, select_mipt


class TestMiptScore:
    def test_coincident_candidate_scores_zero(self):
        samples = np.array([[0.3, 0.3], [0.7, 0.1]])
        assert mipt_score([0.3, 0.3], samples, 0.01) == 0.0

    def test_single_sample_distance(self):
        assert mipt_score([0.5], np.array([[0.0]]), 0.01) == pytest.approx(0.5)

    def test_threshold_kills_shared_coordinate(self):
        # candidate shares x_1 with a sample up to 1e-4 < d_min
        samples = np.array([[0.2, 0.9]])
        assert mipt_score([0.2 + 1e-4, 0.1], samples, 0.01) == 0.0

    def test_empty_samples(self):
        with pytest.raises(ContractViolationError):
            mipt_score([0.5], np.empty((0, 1)), 0.1)

    def test_argmax_matches_bruteforce(self):
        rng = rng_stream(42)
        samples = rng.random((3, 2))
        pool = mc_pool(100, 2, rng)
        scores = np.array([mipt_score(p, samples, pool.d_min) for p in pool.points])
        expected = oracles.mipt_scores_bruteforce(pool.points, samples, pool.d_min)
        assert scores == pytest.approx(expected, rel=1e-12)
        assert int(np.argmax(scores)) == int(np.argmax(expected))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_monotone_in_samples(self, seed):
        rng = rng_stream(seed)
        samples = rng.random((4, 2))
        candidate = rng.random(2)
        before = mipt_score(candidate, samples[:3], 0.001)
        after = mipt_score(candidate, samples, 0.001)
        assert after <= before


class TestSelectMipt:
    def test_single_candidate(self):
        pool = MonteCarloPool(points=np.array([[0.42, 0.1]]), d_min=1.0)
        chosen = select_mipt(pool, np.array([[0.9, 0.9]]))
        assert np.array_equal(chosen, [0.42, 0.1])

    def test_never_returns_existing_sample(self):
        rng = rng_stream(7)
        samples = rng.random((5, 2))
        pool_points = np.vstack([samples, rng.random((50, 2))])
        pool = MonteCarloPool(points=pool_points, d_min=1.0 / len(pool_points))
        chosen = select_mipt(pool, samples)
        assert min(np.linalg.norm(samples - chosen, axis=1)) > 0.0

    def test_all_zero_scores_fall_back_to_projection(self):
        # d_min = 1 eliminates every candidate; the fallback maximizes the
        # projected distance instead of erroring out
        samples = np.array([[0.5, 0.5]])
        points = np.array([[0.52, 0.9], [0.1, 0.7], [0.45, 0.48]])
        pool = MonteCarloPool(points=points, d_min=1.0)
        chosen = select_mipt(pool, samples)
        projections = np.abs(points - samples).min(axis=1)
        assert np.array_equal(chosen, points[int(np.argmax(projections))])

    def test_ties_break_by_lowest_index(self):
        samples = np.array([[0.0, 0.0]])
        # two candidates symmetric around the sample: identical scores
        points = np.array([[0.4, 0.3], [0.3, 0.4], [0.1, 0.1]])
        pool = MonteCarloPool(points=points, d_min=1e-6)
        assert np.array_equal(select_mipt(pool, samples), points[0])

    def test_moves_into_empty_region(self):
        hits = 0
        for seed in range(20):
            rng = rng_stream(seed, 3)
            samples = 0.15 * rng.random((6, 2))  # clustered in one corner
            pool = mc_pool(400, 2, rng)
            chosen = select_mipt(pool, samples)
            dist_chosen = np.linalg.norm(samples - chosen, axis=1).min()
            median_dist = np.median(
                np.linalg.norm(pool.points[:, None, :] - samples[None], axis=2).min(axis=1)
            )
            hits += dist_chosen >= median_dist
        assert hits == 20
