from __future__ import annotations

import numpy as np
import pytest

from mivor.kriging import SwarmConfig


@pytest.fixture
def light_swarm() -> SwarmConfig:
    """Small but real swarm settings so fits stay fast in unit tests."""
    return SwarmConfig(particles=6, iterations=12, refine_steps=40, rng_seed=7)


def random_dataset_arrays(rng: np.random.Generator, m: int, n: int, min_sep: float = 0.01):
    """Random points in [0,1]^n with a minimum pairwise separation.

    The separation mirrors the anti-clustering guard of the adaptive loop
    and keeps correlation matrices honestly factorizable at the base nugget.
    """
    points = []
    while len(points) < m:
        cand = rng.random(n)
        if all(np.linalg.norm(cand - p) >= min_sep for p in points):
            points.append(cand)
    pts = np.array(points)
    values = rng.normal(size=m)
    return pts, values
