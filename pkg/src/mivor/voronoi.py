"""Exploitation step: Monte Carlo Voronoi volumes, cell ranking and the
boundary-seeking candidate with its anti-clustering guard.

Voronoi cell volumes are never computed exactly; each pool point is assigned
to its nearest sample and the normalized assignment counts estimate the cell
volume fractions.  Cells of above-limit (C1) samples are ranked by volume
times the number of below-limit neighbors, the best cell donates the pool
point closest to the other class, and a minimum-spacing test decides between
that candidate, a maximum-variance substitute, or falling back to
exploration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .design import MonteCarloPool
from .errors import ContractViolationError
from .kriging import KrigingModel, predict_many


@dataclass(frozen=True)
class VolumeEstimate:
    """Normalized Voronoi volume fractions plus the pool assignment behind them."""

    volumes: np.ndarray      # (m,) fractions summing to 1
    assignment: np.ndarray   # (n_mc,) nearest-sample index per pool point
    pool: MonteCarloPool     # the pool the assignment indexes into


@dataclass(frozen=True)
class CellScore:
    """Ranking record of one above-limit sample: volume fraction times C2 neighbors."""

    sample_index: int
    score: float
    neighbor_count: int


def estimate_volumes(samples: np.ndarray, pool: MonteCarloPool) -> VolumeEstimate:
    """Assign every pool point to its nearest sample (ties: lowest index)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise ContractViolationError("estimate_volumes needs a nonempty sample set")
    assignment = np.argmin(cdist(pool.points, samples), axis=1)
    counts = np.bincount(assignment, minlength=samples.shape[0])
    return VolumeEstimate(counts / pool.size, assignment, pool)


def neighborhood_count(sample_index: int, samples: np.ndarray, labels: np.ndarray) -> int:
    """Below-limit (C2) samples among the min(2n, m-1) nearest neighbors.

    Only defined for above-limit samples; distance ties resolve to the lower
    sample index.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    labels = np.asarray(labels, dtype=bool).ravel()
    m, n = samples.shape
    if m < 2:
        raise ContractViolationError("neighborhood_count needs at least 2 samples")
    if not labels[sample_index]:
        raise ContractViolationError("neighborhood_count is defined for C1 samples only")
    dist = np.linalg.norm(samples - samples[sample_index], axis=1)
    dist[sample_index] = np.inf
    nearest = np.argsort(dist, kind="stable")[: min(2 * n, m - 1)]
    return int(np.count_nonzero(~labels[nearest]))


def score_cells(samples: np.ndarray, labels: np.ndarray, volumes: VolumeEstimate) -> list[CellScore]:
    """Scores of all above-limit samples, in index order."""
    labels = np.asarray(labels, dtype=bool).ravel()
    out = []
    for i in np.flatnonzero(labels):
        count = neighborhood_count(int(i), samples, labels)
        out.append(CellScore(int(i), float(volumes.volumes[i] * count), count))
    return out


def rank_cells(
    samples: np.ndarray, labels: np.ndarray, volumes: VolumeEstimate
) -> tuple[int, np.ndarray]:
    """Highest-scoring above-limit cell and the pool points inside it.

    Returns (sample index, pool points assigned to that cell); score ties
    keep the lowest sample index.
    """
    scores = score_cells(samples, labels, volumes)
    if not scores:
        raise ContractViolationError("rank_cells needs at least one C1 sample")
    best = max(scores, key=lambda c: c.score)  # max() keeps the first maximum
    members = volumes.pool.points[volumes.assignment == best.sample_index]
    return best.sample_index, members


def select_candidate(p_max: np.ndarray, samples_c2: np.ndarray) -> np.ndarray | None:
    """Pool point of the best cell closest to any below-limit sample.

    Returns None when the cell captured no pool points or no below-limit
    sample exists; the caller falls back to exploration in that case.
    """
    p_max = np.atleast_2d(np.asarray(p_max, dtype=float))
    samples_c2 = np.atleast_2d(np.asarray(samples_c2, dtype=float))
    if p_max.shape[0] == 0 or samples_c2.shape[0] == 0 or p_max.size == 0 or samples_c2.size == 0:
        return None
    nearest = cdist(p_max, samples_c2).min(axis=1)
    return p_max[int(np.argmin(nearest))].copy()


def space_filling_metric(samples: np.ndarray) -> float:
    """0.1 times the largest nearest-neighbor distance among the samples."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 2:
        raise ContractViolationError("space_filling_metric needs at least 2 samples")
    dist = cdist(samples, samples)
    np.fill_diagonal(dist, np.inf)
    return 0.1 * float(dist.min(axis=1).max())


@dataclass(frozen=True)
class ExploitDecision:
    """Outcome of the anti-clustering workflow."""

    kind: str                     # "candidate" | "substitute" | "fallback"
    point: np.ndarray | None


def accept_or_substitute(
    cand: np.ndarray,
    p_max: np.ndarray,
    model: KrigingModel,
    samples: np.ndarray,
    s: float,
) -> ExploitDecision:
    """Minimum-spacing acceptance test with a maximum-variance substitute.

    The candidate is accepted when it keeps distance > s to every sample;
    otherwise the pool point of the best cell with the highest prediction
    variance gets the same test; if that fails too the step falls back to
    exploration.  Every accepted point therefore keeps the correlation
    matrix away from near-duplicate rows.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    cand = np.asarray(cand, dtype=float).ravel()
    if np.linalg.norm(samples - cand, axis=1).min() > s:
        return ExploitDecision("candidate", cand)
    p_max = np.atleast_2d(np.asarray(p_max, dtype=float))
    if p_max.shape[0] == 0 or p_max.size == 0:
        return ExploitDecision("fallback", None)
    _, variances = predict_many(model, p_max)
    subs = p_max[int(np.argmax(variances))]
    if cdist(samples, subs[None, :]).min() > s:
        return ExploitDecision("substitute", subs.copy())
    return ExploitDecision("fallback", None)
