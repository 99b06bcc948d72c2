from __future__ import annotations

import numpy as np
import pytest

import oracles
from conftest import random_dataset_arrays
from mivor.design import MonteCarloPool, mc_pool, rng_stream
from mivor.errors import ContractViolationError
from mivor.kriging import Dataset, SwarmConfig, fit, predict_many
from mivor.voronoi import (
    VolumeEstimate,
    accept_or_substitute,
    estimate_volumes,
    neighborhood_count,
    rank_cells,
    score_cells,
    select_candidate,
    space_filling_metric,
)


class TestEstimateVolumes:
    def test_symmetric_pair(self):
        pool = mc_pool(100_000, 1, rng_stream(1))
        est = estimate_volumes(np.array([[0.25], [0.75]]), pool)
        assert est.volumes == pytest.approx([0.5, 0.5], abs=0.01)
        assert est.volumes.sum() == pytest.approx(1.0, abs=1e-12)

    def test_single_sample_owns_everything(self):
        pool = mc_pool(500, 2, rng_stream(2))
        est = estimate_volumes(np.array([[0.4, 0.6]]), pool)
        assert est.volumes == pytest.approx([1.0])

    def test_tie_goes_to_lowest_index(self):
        pool = MonteCarloPool(points=np.array([[0.5]]), d_min=1.0)
        est = estimate_volumes(np.array([[0.25], [0.75]]), pool)
        assert est.assignment.tolist() == [0]

    def test_matches_exact_areas(self):
        rng = rng_stream(3)
        samples = rng.random((3, 2))
        n_mc = 20_000
        pool = mc_pool(n_mc, 2, rng)
        est = estimate_volumes(samples, pool)
        exact = oracles.voronoi_areas_exact(samples)
        for vol, area in zip(est.volumes, exact):
            se = np.sqrt(area * (1 - area) / n_mc)
            assert abs(vol - area) <= 3 * se


class TestNeighborhoodCount:
    def test_bounds(self):
        samples = np.array([[0.1, 0.1], [0.2, 0.9], [0.8, 0.2], [0.9, 0.9], [0.5, 0.5], [0.3, 0.4]])
        all_c2 = np.array([True, False, False, False, False, False])
        assert neighborhood_count(0, samples, all_c2) == min(2 * 2, 5)
        all_c1 = np.ones(6, dtype=bool)
        assert neighborhood_count(0, samples, all_c1) == 0

    def test_hand_enumeration_1d(self):
        samples = np.array([[0.05], [0.2], [0.35], [0.5], [0.7], [0.95]])
        labels = np.array([False, True, True, False, False, False])
        # index 1 (0.2): nearest min(2,5)=2 others are 0.05 (C2) and 0.35 (C1)
        assert neighborhood_count(1, samples, labels) == 1
        # index 2 (0.35): nearest are 0.2 (C1) and 0.5 (C2)
        assert neighborhood_count(2, samples, labels) == 1
        for i in (1, 2):
            expected = oracles.neighbor_c2_count_bruteforce(i, samples, labels, 2)
            assert neighborhood_count(i, samples, labels) == expected

    def test_rejects_c2_sample(self):
        samples = np.array([[0.1], [0.9]])
        with pytest.raises(ContractViolationError):
            neighborhood_count(0, samples, np.array([False, True]))


class TestRankCells:
    def test_single_c1_wins_regardless(self):
        samples = np.array([[0.2], [0.5], [0.8]])
        labels = np.array([False, True, False])
        pool = mc_pool(200, 1, rng_stream(4))
        est = estimate_volumes(samples, pool)
        idx, members = rank_cells(samples, labels, est)
        assert idx == 1
        assert np.array_equal(members, pool.points[est.assignment == 1])

    def test_score_is_volume_times_neighbors(self):
        # C1 samples at 0.0 and 0.9; 0.0 has one C2 among its two nearest,
        # 0.9 has two, so hand-crafted volumes (0.3, 0.2) give scores (0.3, 0.4)
        samples = np.array([[0.0], [0.9], [0.5], [1.0]])
        labels = np.array([True, True, False, False])
        pool = MonteCarloPool(points=np.array([[0.1], [0.8], [0.95], [0.4]]), d_min=0.25)
        est = VolumeEstimate(np.array([0.3, 0.2, 0.4, 0.1]), np.array([0, 1, 3, 2]), pool)
        scores = score_cells(samples, labels, est)
        assert [(c.sample_index, c.neighbor_count) for c in scores] == [(0, 1), (1, 2)]
        assert [c.score for c in scores] == pytest.approx([0.3, 0.4])
        idx, members = rank_cells(samples, labels, est)
        assert idx == 1
        assert np.array_equal(members, np.array([[0.8]]))

    def test_matches_bruteforce(self):
        rng = rng_stream(5)
        for trial in range(10):
            samples = rng.random((7, 2))
            labels = rng.random(7) < 0.4
            if not labels.any() or labels.all():
                continue
            pool = mc_pool(300, 2, rng)
            est = estimate_volumes(samples, pool)
            vol_bf, idx_bf, _ = oracles.exploitation_bruteforce(samples, labels, pool.points)
            assert est.volumes == pytest.approx(vol_bf)
            idx, _ = rank_cells(samples, labels, est)
            assert idx == idx_bf

    def test_no_c1_raises(self):
        samples = np.array([[0.2], [0.8]])
        pool = mc_pool(10, 1, rng_stream(6))
        est = estimate_volumes(samples, pool)
        with pytest.raises(ContractViolationError):
            rank_cells(samples, np.array([False, False]), est)


class TestSelectCandidate:
    def test_singleton(self):
        point = select_candidate(np.array([[0.3, 0.3]]), np.array([[0.9, 0.9]]))
        assert np.array_equal(point, [0.3, 0.3])

    def test_prefers_point_near_other_class(self):
        p_max = np.array([[0.35], [0.45]])
        assert np.array_equal(select_candidate(p_max, np.array([[0.6]])), [0.45])

    def test_signals_fallback(self):
        assert select_candidate(np.empty((0, 2)), np.array([[0.1, 0.1]])) is None
        assert select_candidate(np.array([[0.1, 0.1]]), np.empty((0, 2))) is None

    def test_matches_bruteforce(self):
        rng = rng_stream(8)
        for _ in range(10):
            samples = rng.random((6, 2))
            labels = np.array([True, True, False, False, False, True])
            pool = mc_pool(200, 2, rng)
            est = estimate_volumes(samples, pool)
            _, members = rank_cells(samples, labels, est)
            cand = select_candidate(members, samples[~labels])
            _, _, cand_bf = oracles.exploitation_bruteforce(samples, labels, pool.points)
            if cand_bf is None:
                assert cand is None
            else:
                assert cand == pytest.approx(np.asarray(cand_bf))


class TestSpaceFillingMetric:
    def test_two_points(self):
        assert space_filling_metric(np.array([[0.1], [0.9]])) == pytest.approx(0.08)

    def test_uniform_grid(self):
        grid = np.linspace(0.0, 1.0, 11)[:, None]
        assert space_filling_metric(grid) == pytest.approx(0.01)

    def test_matches_bruteforce(self):
        rng = rng_stream(9)
        samples = rng.random((12, 2))
        assert space_filling_metric(samples) == pytest.approx(
            oracles.s_metric_bruteforce(samples), rel=1e-12
        )

    def test_requires_two_points(self):
        with pytest.raises(ContractViolationError):
            space_filling_metric(np.array([[0.5, 0.5]]))


def _toy_model(samples, values, seed=0):
    data = Dataset(samples, values, np.asarray(values) >= 0.0)
    return fit(data, SwarmConfig(particles=4, iterations=6, refine_steps=10, rng_seed=seed))


class TestAcceptOrSubstitute:
    def test_far_candidate_accepted(self):
        samples = np.array([[0.1, 0.1], [0.2, 0.15], [0.9, 0.9]])
        model = _toy_model(samples, [1.0, -1.0, -0.5])
        s = space_filling_metric(samples)
        decision = accept_or_substitute(
            np.array([0.5, 0.5]), samples.copy(), model, samples, s
        )
        assert decision.kind == "candidate"
        assert np.array_equal(decision.point, [0.5, 0.5])

    def test_substitute_taken_from_highest_variance(self):
        samples = np.array([[0.2, 0.2], [0.4, 0.2], [0.6, 0.2], [0.8, 0.8]])
        model = _toy_model(samples, [1.0, -1.0, -0.6, -0.2])
        s = space_filling_metric(samples)
        cand = samples[0] + np.array([0.0, 1e-4])  # violates the spacing guard
        p_max = np.array([[0.21, 0.21], [0.05, 0.9], [0.22, 0.18]])
        decision = accept_or_substitute(cand, p_max, model, samples, s)
        assert decision.kind == "substitute"
        _, variances = predict_many(model, p_max)
        assert np.array_equal(decision.point, p_max[int(np.argmax(variances))])
        assert np.linalg.norm(samples - decision.point, axis=1).min() > s

    def test_exhaustion_falls_back(self):
        samples = np.array([[0.2, 0.2], [0.8, 0.8]])
        model = _toy_model(samples, [1.0, -1.0])
        s = space_filling_metric(samples)  # 0.1 * dist: generous
        cand = samples[0] + 1e-5
        p_max = samples + 1e-5  # every substitute also hugs a sample
        decision = accept_or_substitute(cand, p_max, model, samples, s)
        assert decision.kind == "fallback"
        assert decision.point is None

    def test_accepted_points_respect_guard(self):
        rng = rng_stream(11)
        for trial in range(10):
            pts, values = random_dataset_arrays(rng, 6, 2, min_sep=0.05)
            model = _toy_model(pts, values, seed=trial)
            s = space_filling_metric(pts)
            pool = mc_pool(150, 2, rng)
            cand = pool.points[0]
            decision = accept_or_substitute(cand, pool.points, model, pts, s)
            if decision.kind != "fallback":
                assert np.linalg.norm(pts - decision.point, axis=1).min() > s


class TestWholeStepAgainstBruteforce:
    def test_pipeline_matches(self):
        rng = rng_stream(13)
        checked = 0
        for trial in range(12):
            m = int(rng.integers(4, 9))
            samples = rng.random((m, 2))
            labels = rng.random(m) < 0.5
            if not labels.any() or labels.all():
                continue
            pool = mc_pool(int(rng.integers(100, 1000)), 2, rng)
            est = estimate_volumes(samples, pool)
            vol_bf, idx_bf, cand_bf = oracles.exploitation_bruteforce(
                samples, labels, pool.points
            )
            assert est.volumes == pytest.approx(vol_bf)
            idx, members = rank_cells(samples, labels, est)
            assert idx == idx_bf
            cand = select_candidate(members, samples[~labels])
            if cand_bf is None:
                assert cand is None
            else:
                assert cand == pytest.approx(np.asarray(cand_bf))
            checked += 1
        assert checked >= 5
