"""Space-filling exploration over a Monte Carlo candidate pool.

A candidate is scored against the existing samples: zero whenever some
sample lies closer than ``d_min`` in the projected (per-coordinate minimum)
distance, otherwise the plain intersite Euclidean distance.  Maximizing the
score pushes new points away from existing ones in every single coordinate,
which keeps the design non-collapsing.
"""

from __future__ import annotations

import numpy as np

from .design import MonteCarloPool
from .errors import ContractViolationError

_CHUNK = 8192


def _score_block(cands: np.ndarray, samples: np.ndarray, d_min: float) -> tuple[np.ndarray, np.ndarray]:
    """(scores, projected distances) for a block of candidates."""
    diff = np.abs(cands[:, None, :] - samples[None, :, :])
    projected = diff.min(axis=2).min(axis=1)
    intersite = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).min(axis=1)
    return np.where(projected < d_min, 0.0, intersite), projected


def mipt_score(candidate: np.ndarray, samples: np.ndarray, d_min: float) -> float:
    """Intersite-projected-threshold score of one candidate."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise ContractViolationError("mipt_score needs a nonempty sample set")
    candidate = np.asarray(candidate, dtype=float).ravel()
    if candidate.shape != (samples.shape[1],):
        raise ContractViolationError("candidate dimension does not match samples")
    scores, _ = _score_block(candidate[None, :], samples, d_min)
    return float(scores[0])


def select_mipt(pool: MonteCarloPool, samples: np.ndarray) -> np.ndarray:
    """Pool point with the maximal score; first index wins ties.

    If the threshold wipes out the whole pool (every score zero), the
    candidate with the largest projected distance is returned instead so the
    step still makes progress away from existing samples.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise ContractViolationError("select_mipt needs a nonempty sample set")
    best_idx = 0
    best_score = -1.0
    fallback_idx = 0
    fallback_proj = -1.0
    for start in range(0, pool.size, _CHUNK):
        block = pool.points[start : start + _CHUNK]
        scores, projected = _score_block(block, samples, pool.d_min)
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best_score = float(scores[i])
            best_idx = start + i
        j = int(np.argmax(projected))
        if projected[j] > fallback_proj:
            fallback_proj = float(projected[j])
            fallback_idx = start + j
    if best_score <= 0.0:
        return pool.points[fallback_idx].copy()
    return pool.points[best_idx].copy()
