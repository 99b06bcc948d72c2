"""Deterministic initial designs and per-iteration Monte Carlo candidate pools."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError


@dataclass(frozen=True)
class MonteCarloPool:
    """Uniform random candidate cloud on [0,1]^n with its projected-distance threshold."""

    points: np.ndarray  # (n_mc, n)
    d_min: float        # 1 / n_mc

    def __post_init__(self) -> None:
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", points)
        if points.shape[0] < 1:
            raise ContractViolationError("pool must contain at least one point")
        if points.min() < 0.0 or points.max() > 1.0:
            raise ContractViolationError("pool points must lie in the unit hypercube")

    @property
    def size(self) -> int:
        return self.points.shape[0]


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for a (seed, stream) pair."""
    return np.random.default_rng([int(seed), int(stream_id)])


def _divisions(k: int, n: int) -> int:
    """Smallest nd with nd**n >= k (exact integer arithmetic)."""
    nd = max(1, round(k ** (1.0 / n)))
    while nd**n < k:
        nd += 1
    while nd > 1 and (nd - 1) ** n >= k:
        nd -= 1
    return nd


def tplhd(k: int, n: int) -> np.ndarray:
    """Translational-propagation Latin hypercube of k points in [0,1]^n.

    A one-point seed is propagated over nd = ceil(k**(1/n)) blocks per
    dimension; block shifts are chosen so every dimension ends up a
    permutation of the full grid (the Latin property).  When nd**n exceeds k
    the points farthest from the domain center are dropped and the remaining
    coordinates are re-ranked onto the k-strata grid.  Fully deterministic,
    no randomness involved.  Each dimension spans [0, 1] inclusive (rank
    r maps to r/(k-1)), so designs reach the domain boundary; the single
    point of a k=1 design sits at the center.
    """
    if k < 1 or n < 1:
        raise ContractViolationError("tplhd requires k >= 1 and n >= 1")
    if k == 1:
        return np.full((1, n), 0.5)
    nd = _divisions(k, n)
    npstar = nd**n

    # Block index digits of each point, shape (npstar, n).
    idx = np.arange(npstar)
    blocks = np.empty((npstar, n), dtype=np.int64)
    for j in range(n):
        blocks[:, j] = (idx // nd**j) % nd

    # Grid coordinate per dimension: the own block index takes the highest
    # digit, the other block indices fill the remaining mixed-radix digits,
    # so each column is a permutation of 0..npstar-1.
    grid = np.empty((npstar, n), dtype=np.int64)
    for i in range(n):
        g = blocks[:, i] * nd ** (n - 1)
        for j in range(n):
            if j == i:
                continue
            g = g + blocks[:, j] * nd ** (j if j < i else j - 1)
        grid[:, i] = g

    if npstar > k:
        center = (npstar - 1) / 2.0
        dist2 = ((grid - center) ** 2).sum(axis=1)
        keep = np.argsort(dist2, kind="stable")[:k]
        grid = grid[np.sort(keep)]
        # re-rank each coordinate onto the k-strata grid
        ranks = np.empty_like(grid)
        for i in range(n):
            order = np.argsort(grid[:, i], kind="stable")
            ranks[order, i] = np.arange(k)
        grid = ranks

    return grid / (k - 1)


def mc_pool(n_mc: int, n: int, rng: np.random.Generator) -> MonteCarloPool:
    """Draw n_mc independent uniform points on [0,1]^n from the given stream."""
    if n_mc < 1 or n < 1:
        raise ContractViolationError("mc_pool requires n_mc >= 1 and n >= 1")
    return MonteCarloPool(points=rng.random((n_mc, n)), d_min=1.0 / n_mc)
