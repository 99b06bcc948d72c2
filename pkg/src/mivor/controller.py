"""The adaptive sampling loop: threshold classifier, random switching between
exploration and exploitation with a geometrically decaying exploration rate,
per-step model refits and a complete step log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kriging
from .design import MonteCarloPool, mc_pool, rng_stream, tplhd
from .errors import ContractViolationError, EvaluationError, MivorError
from .kriging import Dataset, KrigingModel, NuggetPolicy, SwarmConfig
from .mipt import select_mipt
from .voronoi import (
    accept_or_substitute,
    estimate_volumes,
    rank_cells,
    select_candidate,
    space_filling_metric,
)

STEP_INITIAL = "initial"
STEP_MIPT_FORCED = "mipt-forced"
STEP_MIPT_RANDOM = "mipt-random"
STEP_EXPLOIT_CANDIDATE = "exploit-candidate"
STEP_EXPLOIT_SUBSTITUTE = "exploit-substitute"
STEP_MIPT_FALLBACK = "mipt-fallback"

STEP_KINDS = (
    STEP_INITIAL,
    STEP_MIPT_FORCED,
    STEP_MIPT_RANDOM,
    STEP_EXPLOIT_CANDIDATE,
    STEP_EXPLOIT_SUBSTITUTE,
    STEP_MIPT_FALLBACK,
)

FitFn = Callable[[Dataset, SwarmConfig, NuggetPolicy], KrigingModel]


@dataclass(frozen=True)
class ClassRule:
    """Binary threshold on the observed quantity: value >= limit means class C1."""

    limit: float


def classify(value: float, rule: ClassRule) -> bool:
    """True for class C1 (value >= limit), False for C2; rejects non-finite values."""
    value = float(value)
    if not math.isfinite(value):
        raise EvaluationError(f"cannot classify non-finite value {value!r}")
    return value >= rule.limit


def classify_many(values: np.ndarray, rule: ClassRule) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("cannot classify non-finite values")
    return values >= rule.limit


@dataclass(frozen=True)
class MivorConfig:
    """Run settings of one adaptive campaign.

    ``n_mc`` fixes the Monte Carlo pool size; None grows it as 100 * n * m
    with the dataset.  Each refit derives a fresh swarm seed from
    (base_seed, dataset size).
    """

    n_initial: int
    n_total: int
    r0: float = 0.4
    alpha: float = 1.1
    n_mc: int | None = None
    swarm: SwarmConfig = SwarmConfig()
    nugget: NuggetPolicy = NuggetPolicy()
    base_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.r0 <= 1.0:
            raise ContractViolationError("r0 must lie in [0, 1]")
        if self.alpha <= 1.0:
            raise ContractViolationError("alpha must exceed 1")
        if self.n_initial < 2 or self.n_total < self.n_initial:
            raise ContractViolationError("need n_total >= n_initial >= 2")
        if self.n_mc is not None and self.n_mc < 1:
            raise ContractViolationError("n_mc must be positive when fixed")


def pool_size(cfg: MivorConfig, n: int, m: int) -> int:
    return cfg.n_mc if cfg.n_mc is not None else 100 * n * m


@dataclass(frozen=True)
class StepRecord:
    """One appended sample: dataset size after the append, how the point was
    chosen, its normalized coordinates, observation and the exploration rate
    left after the step."""

    iteration: int
    kind: str
    point: np.ndarray
    value: float
    r_after: float


@dataclass
class MivorState:
    """Evolving state of one adaptive run."""

    dataset: Dataset
    model: KrigingModel
    r: float
    rng: np.random.Generator
    rule: ClassRule
    cfg: MivorConfig
    step_log: list[StepRecord] = field(default_factory=list)


def initialize(problem, rule: ClassRule, cfg: MivorConfig, fit_fn: FitFn = kriging.fit) -> MivorState:
    """Evaluate the initial space-filling design and fit the first model.

    ``problem`` must expose ``dimension`` and ``evaluate_normalized(point)``.
    """
    n = problem.dimension
    points = tplhd(cfg.n_initial, n)
    values = np.array([float(problem.evaluate_normalized(p)) for p in points])
    labels = classify_many(values, rule)
    dataset = Dataset(points, values, labels)
    model = fit_fn(dataset, kriging.refit_config(cfg.swarm, cfg.base_seed, dataset.m), cfg.nugget)
    log = [
        StepRecord(i + 1, STEP_INITIAL, points[i].copy(), float(values[i]), cfg.r0)
        for i in range(cfg.n_initial)
    ]
    return MivorState(
        dataset=dataset,
        model=model,
        r=cfg.r0,
        rng=rng_stream(cfg.base_seed, 1),
        rule=rule,
        cfg=cfg,
        step_log=log,
    )


def _choose_point(state: MivorState, pool: MonteCarloPool) -> tuple[np.ndarray, str, float]:
    """Pick the next normalized sample point; returns (point, step kind, new r).

    While no above-limit sample exists the step is forced exploration and
    consumes no randomness.  Otherwise one uniform draw decides: below the
    exploration rate r the step explores and r shrinks by 1/alpha, else the
    step exploits the Voronoi ranking, falling back to exploration whenever
    the exploitation machinery cannot produce an admissible point.
    """
    samples = state.dataset.points
    labels = state.dataset.labels
    if not labels.any():
        return select_mipt(pool, samples), STEP_MIPT_FORCED, state.r

    u = float(state.rng.random())
    if u < state.r:
        return select_mipt(pool, samples), STEP_MIPT_RANDOM, state.r / state.cfg.alpha

    if labels.all():  # no C2 sample to aim at yet
        return select_mipt(pool, samples), STEP_MIPT_FALLBACK, state.r
    volumes = estimate_volumes(samples, pool)
    _, p_max = rank_cells(samples, labels, volumes)
    cand = select_candidate(p_max, samples[~labels])
    if cand is None:
        return select_mipt(pool, samples), STEP_MIPT_FALLBACK, state.r
    decision = accept_or_substitute(cand, p_max, state.model, samples, space_filling_metric(samples))
    if decision.kind == "candidate":
        return decision.point, STEP_EXPLOIT_CANDIDATE, state.r
    if decision.kind == "substitute":
        return decision.point, STEP_EXPLOIT_SUBSTITUTE, state.r
    return select_mipt(pool, samples), STEP_MIPT_FALLBACK, state.r


def mivor_step(state: MivorState, pool: MonteCarloPool, blackbox, fit_fn: FitFn = kriging.fit) -> MivorState:
    """Choose, evaluate and append one point, then refit the model.

    ``blackbox`` maps a normalized point to the observed quantity.  If the
    evaluation fails the state is left untouched and the error propagates.
    """
    if state.dataset.m >= state.cfg.n_total:
        raise ContractViolationError("sample budget already exhausted")
    point, kind, r_new = _choose_point(state, pool)
    value = float(blackbox(point))
    label = classify(value, state.rule)
    dataset = state.dataset.append(point, value, label)
    model = fit_fn(
        dataset,
        kriging.refit_config(state.cfg.swarm, state.cfg.base_seed, dataset.m),
        state.cfg.nugget,
    )
    state.dataset = dataset
    state.model = model
    state.r = r_new
    state.step_log.append(StepRecord(dataset.m, kind, point.copy(), value, r_new))
    return state


def run(problem, rule: ClassRule, cfg: MivorConfig, fit_fn: FitFn = kriging.fit) -> MivorState:
    """Full adaptive campaign from the initial design to the sample budget.

    Deterministic for a fixed ``cfg.base_seed``.  Fit and evaluation errors
    are re-raised with the failing dataset size attached.
    """
    state = initialize(problem, rule, cfg, fit_fn)
    n = problem.dimension
    while state.dataset.m < cfg.n_total:
        pool = mc_pool(pool_size(cfg, n, state.dataset.m), n, state.rng)
        try:
            mivor_step(state, pool, problem.evaluate_normalized, fit_fn)
        except MivorError as exc:
            raise type(exc)(f"adaptive step at m={state.dataset.m + 1} failed: {exc}") from exc
    return state
