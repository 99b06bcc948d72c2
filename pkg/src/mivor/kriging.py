"""Ordinary kriging on the normalized unit hypercube.

The surrogate interpolates scalar observations with a constant (but unknown)
process mean.  Correlation between inputs is the Matern 3/2 family with one
correlation length per dimension; hyperparameters are chosen by minimizing
the reduced likelihood with a seeded particle swarm followed by a
Nelder-Mead polish of the swarm best.  All linear algebra goes through one
Cholesky factorization of the (nugget-regularized) correlation matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.optimize import minimize

from .design import tplhd
from .errors import (
    ContractViolationError,
    DegenerateDatasetError,
    FitFailureError,
    IllConditionedModelError,
)

SQRT3 = math.sqrt(3.0)

#: Default nugget added to the correlation diagonal before factorization.
DEFAULT_NUGGET = 1e-8


@dataclass(frozen=True)
class Dataset:
    """Normalized training data: ``m`` points in [0,1]^n with scalar observations.

    ``labels`` caches the binary classification of each observation
    (True marks the above-limit class C1); coherence with the classifier
    rule is the responsibility of whoever builds the instance.
    """

    points: np.ndarray  # (m, n)
    values: np.ndarray  # (m,)
    labels: np.ndarray  # (m,) bool, True = C1

    def __post_init__(self) -> None:
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        values = np.asarray(self.values, dtype=float).ravel()
        labels = np.asarray(self.labels, dtype=bool).ravel()
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        m, _ = points.shape
        if values.shape != (m,) or labels.shape != (m,):
            raise ContractViolationError(
                f"inconsistent dataset shapes: {points.shape}, {values.shape}, {labels.shape}"
            )
        if m == 0:
            raise ContractViolationError("dataset must contain at least one point")
        if points.min(initial=0.0) < 0.0 or points.max(initial=0.0) > 1.0:
            raise ContractViolationError("dataset points must lie in the unit hypercube")
        if not np.all(np.isfinite(values)):
            raise ContractViolationError("observations must be finite")
        if m > 1:
            diff = points[:, None, :] - points[None, :, :]
            dist2 = np.einsum("ijk,ijk->ij", diff, diff)
            np.fill_diagonal(dist2, np.inf)
            if dist2.min() <= 0.0:
                raise ContractViolationError("dataset points must be pairwise distinct")

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def append(self, point: np.ndarray, value: float, label: bool) -> "Dataset":
        """Return a new dataset with one extra (point, value, label) row."""
        point = np.asarray(point, dtype=float).ravel()
        if point.shape != (self.n,):
            raise ContractViolationError(f"expected point of dimension {self.n}")
        return Dataset(
            np.vstack([self.points, point[None, :]]),
            np.append(self.values, float(value)),
            np.append(self.labels, bool(label)),
        )


@dataclass(frozen=True)
class Hyperparameters:
    """Per-dimension Matern 3/2 correlation lengths on the normalized domain."""

    lengths: np.ndarray  # (n,) strictly positive

    def __post_init__(self) -> None:
        lengths = np.asarray(self.lengths, dtype=float).ravel()
        object.__setattr__(self, "lengths", lengths)
        if lengths.size == 0 or not np.all(lengths > 0.0) or not np.all(np.isfinite(lengths)):
            raise ContractViolationError("correlation lengths must be finite and positive")


@dataclass(frozen=True)
class SwarmConfig:
    """Settings of the hyperparameter search (swarm plus local polish).

    Correlation lengths are searched in log10 space within
    ``log10_length_bounds``; the defaults cover [1e-3, 1e2], which is
    scale-free on the normalized domain.
    """

    particles: int = 20
    iterations: int = 40
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    log10_length_bounds: tuple[float, float] = (-3.0, 2.0)
    refine_steps: int = 80
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.particles < 2:
            raise ContractViolationError("swarm needs at least 2 particles")
        if self.iterations < 1:
            raise ContractViolationError("swarm needs at least 1 iteration")
        lo, hi = self.log10_length_bounds
        if not lo < hi:
            raise ContractViolationError("log10 length bounds must be ordered")
        if self.refine_steps < 0:
            raise ContractViolationError("refine_steps must be nonnegative")


@dataclass(frozen=True)
class NuggetPolicy:
    """Escalation ladder for the diagonal regularization of the correlation matrix."""

    initial: float = DEFAULT_NUGGET
    growth: float = 10.0
    maximum: float = 1e-4

    def ladder(self) -> list[float]:
        out = [self.initial]
        while out[-1] * self.growth <= self.maximum * (1 + 1e-12):
            out.append(out[-1] * self.growth)
        return out


@dataclass(frozen=True)
class KrigingModel:
    """A fitted ordinary-kriging surrogate.

    Immutable; safe to share across threads.  ``factor`` is the lower
    Cholesky factor of R + nugget*I and every prediction reuses it, so no
    further factorizations happen after the fit.
    """

    data: Dataset
    hyper: Hyperparameters
    mu_hat: float
    sigma2_hat: float
    factor: np.ndarray       # (m, m) lower triangular
    nugget: float
    weights: np.ndarray      # (m,)  R^-1 (y - mu_hat)
    ones_solve: np.ndarray   # (m,)  R^-1 1
    psi: float               # reduced likelihood at the fitted lengths


def matern32(a: np.ndarray, b: np.ndarray, hyper: Hyperparameters) -> float:
    """Matern 3/2 correlation between two normalized points.

    Product over dimensions of (1 + sqrt(3)|a_i-b_i|/l_i) exp(-sqrt(3)|a_i-b_i|/l_i).
    Equals 1 exactly when a == b and decays towards 0 with distance.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape or a.shape != hyper.lengths.shape:
        raise ContractViolationError(
            f"dimension mismatch: {a.shape}, {b.shape}, lengths {hyper.lengths.shape}"
        )
    t = SQRT3 * np.abs(a - b) / hyper.lengths
    return float(np.prod(1.0 + t) * math.exp(-t.sum()))


def _pairwise_absdiff(points: np.ndarray) -> np.ndarray:
    """Per-dimension |x_i - x_j| tensor of shape (n, m, m)."""
    return np.abs(points.T[:, :, None] - points.T[:, None, :])


def _corr_from_absdiff(absdiff: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    t = (SQRT3 / lengths)[:, None, None] * absdiff
    return np.prod(1.0 + t, axis=0) * np.exp(-t.sum(axis=0))


def _cross_corr(points: np.ndarray, queries: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Cross-correlation matrix of shape (m, q)."""
    t = (SQRT3 / lengths)[None, None, :] * np.abs(points[:, None, :] - queries[None, :, :])
    return np.prod(1.0 + t, axis=2) * np.exp(-t.sum(axis=2))


def _factorize(absdiff: np.ndarray, lengths: np.ndarray, nugget: float) -> np.ndarray:
    """Cholesky factor of R(lengths) + nugget*I, or IllConditionedModelError."""
    corr = _corr_from_absdiff(absdiff, lengths)
    corr[np.diag_indices_from(corr)] += nugget
    try:
        return cholesky(corr, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedModelError(
            f"correlation matrix not positive definite at nugget {nugget:g}"
        ) from exc


def _gls(factor: np.ndarray, values: np.ndarray) -> tuple[float, float, float, np.ndarray, np.ndarray]:
    """Constant-trend GLS quantities from one factorization.

    Returns (mu_hat, sigma2_hat, psi, weights, ones_solve).
    """
    m = values.size
    ones = np.ones(m)
    y_solve = cho_solve((factor, True), values, check_finite=False)
    ones_solve = cho_solve((factor, True), ones, check_finite=False)
    denom = float(ones @ ones_solve)
    mu = float(ones @ y_solve) / denom
    weights = y_solve - mu * ones_solve
    sigma2 = float((values - mu) @ weights) / m
    sigma2 = max(sigma2, 0.0)
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor))))
    psi = sigma2 * math.exp(log_det / m)
    return mu, sigma2, psi, weights, ones_solve


def reduced_likelihood(data: Dataset, hyper: Hyperparameters, nugget: float = DEFAULT_NUGGET) -> float:
    """Reduced likelihood sigma2_hat * det(R)^(1/m) at the given lengths.

    Smaller is better; the determinant comes from the squared product of the
    Cholesky diagonal.  Raises DegenerateDatasetError for m < 2 (the variance
    estimator is identically zero there) and IllConditionedModelError when
    the matrix cannot be factorized at the given nugget.
    """
    if data.m < 2:
        raise DegenerateDatasetError("reduced likelihood needs at least 2 observations")
    if hyper.lengths.shape != (data.n,):
        raise ContractViolationError("hyperparameter dimension does not match dataset")
    factor = _factorize(_pairwise_absdiff(data.points), hyper.lengths, nugget)
    return _gls(factor, data.values)[2]


def fit(data: Dataset, cfg: SwarmConfig, nugget_policy: NuggetPolicy = NuggetPolicy()) -> KrigingModel:
    """Fit correlation lengths by swarm search over the reduced likelihood.

    The likelihood is multimodal with narrow basins, so the swarm starts
    from a deterministic space-filling design over the log-length box
    (jittered by the seeded generator) and the best few distinct particles
    each get a Nelder-Mead polish.  Deterministic for a fixed
    ``cfg.rng_seed``.  Each candidate is evaluated through the nugget
    escalation ladder; candidates that stay unfactorizable at the maximum
    nugget score +inf.  Ties in the likelihood keep the first candidate
    encountered.
    """
    if data.m < 2:
        raise DegenerateDatasetError("fitting needs at least 2 observations")
    absdiff = _pairwise_absdiff(data.points)
    values = data.values
    ladder = nugget_policy.ladder()
    lo, hi = cfg.log10_length_bounds
    n = data.n

    # Data-aware floor: lengths far below the nearest-neighbor spacing turn
    # the correlation matrix into (almost) the identity, and the likelihood
    # happily selects that degenerate fit on rough responses even though the
    # surrogate then predicts the constant mean everywhere between samples.
    dist2 = (absdiff**2).sum(axis=0)
    np.fill_diagonal(dist2, np.inf)
    median_nn = float(np.median(np.sqrt(dist2.min(axis=1))))
    if median_nn > 0.0 and math.isfinite(median_nn):
        lo = min(max(lo, math.log10(0.5 * median_nn)), hi - 0.1)

    def evaluate(z: np.ndarray) -> float:
        lengths = 10.0 ** np.clip(z, lo, hi)
        for nugget in ladder:
            try:
                factor = _factorize(absdiff, lengths, nugget)
            except IllConditionedModelError:
                continue
            return _gls(factor, values)[2]
        return math.inf

    rng = np.random.default_rng(cfg.rng_seed)
    stratified = lo + (hi - lo) * tplhd(cfg.particles, n)
    jitter = (hi - lo) / cfg.particles * (rng.random((cfg.particles, n)) - 0.5)
    pos = np.clip(stratified + jitter, lo, hi)
    vel = np.zeros_like(pos)
    pbest = pos.copy()
    pbest_val = np.array([evaluate(p) for p in pos])
    g_idx = int(np.argmin(pbest_val))
    gbest, gbest_val = pbest[g_idx].copy(), float(pbest_val[g_idx])

    for _ in range(cfg.iterations):
        r_cog = rng.random((cfg.particles, n))
        r_soc = rng.random((cfg.particles, n))
        vel = (
            cfg.inertia * vel
            + cfg.cognitive * r_cog * (pbest - pos)
            + cfg.social * r_soc * (gbest[None, :] - pos)
        )
        pos = np.clip(pos + vel, lo, hi)
        for i in range(cfg.particles):
            val = evaluate(pos[i])
            if val < pbest_val[i]:
                pbest_val[i] = val
                pbest[i] = pos[i]
                if val < gbest_val:
                    gbest_val = val
                    gbest = pos[i].copy()

    if cfg.refine_steps > 0 and math.isfinite(gbest_val):
        order = np.argsort(pbest_val, kind="stable")
        for start_idx in order[:3]:
            if not math.isfinite(pbest_val[start_idx]):
                break
            res = minimize(
                evaluate,
                pbest[start_idx],
                method="Nelder-Mead",
                options={"maxiter": cfg.refine_steps, "xatol": 1e-4, "fatol": 1e-12},
            )
            refined = np.clip(res.x, lo, hi)
            refined_val = evaluate(refined)
            if refined_val < gbest_val:
                gbest, gbest_val = refined.copy(), refined_val

    if not math.isfinite(gbest_val):
        raise FitFailureError(
            f"no factorizable hyperparameters found (m={data.m}, "
            f"{cfg.particles}x{cfg.iterations} swarm, nugget ladder {ladder})"
        )

    lengths = 10.0 ** np.clip(gbest, lo, hi)
    last_error: IllConditionedModelError | None = None
    for nugget in ladder:
        try:
            factor = _factorize(absdiff, lengths, nugget)
            break
        except IllConditionedModelError as exc:
            last_error = exc
    else:  # pragma: no cover - evaluate() succeeded on this ladder already
        raise FitFailureError(f"final factorization failed: {last_error}")

    mu, sigma2, psi, weights, ones_solve = _gls(factor, values)
    return KrigingModel(
        data=data,
        hyper=Hyperparameters(lengths),
        mu_hat=mu,
        sigma2_hat=sigma2,
        factor=factor,
        nugget=nugget,
        weights=weights,
        ones_solve=ones_solve,
        psi=psi,
    )


def predict(model: KrigingModel, x: np.ndarray) -> tuple[float, float]:
    """Predictive mean and variance at one normalized point."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (model.data.n,):
        raise ContractViolationError(f"expected query of dimension {model.data.n}")
    mean, var = predict_many(model, x[None, :])
    return float(mean[0]), float(var[0])


def predict_many(
    model: KrigingModel, queries: np.ndarray, chunk: int = 4096
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized prediction at many points; returns (means, variances).

    The variance is sigma2_hat * (1 - r.T R^-1 r + u0^2 / (1.T R^-1 1)) with
    u0 = 1.T R^-1 r - 1, clamped at zero against round-off.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[1] != model.data.n:
        raise ContractViolationError(f"expected queries of dimension {model.data.n}")
    q = queries.shape[0]
    means = np.empty(q)
    variances = np.empty(q)
    ones_quad = float(np.sum(model.ones_solve))
    for start in range(0, q, chunk):
        stop = min(start + chunk, q)
        r_star = _cross_corr(model.data.points, queries[start:stop], model.hyper.lengths)
        means[start:stop] = model.mu_hat + r_star.T @ model.weights
        r_solve = cho_solve((model.factor, True), r_star, check_finite=False)
        quad = np.einsum("ij,ij->j", r_star, r_solve)
        u0 = model.ones_solve @ r_star - 1.0
        variances[start:stop] = model.sigma2_hat * (1.0 - quad + u0 * u0 / ones_quad)
    np.clip(variances, 0.0, None, out=variances)
    return means, variances


def derive_seed(base_seed: int, index: int) -> int:
    """Stable 32-bit sub-seed for (base seed, index) pairs."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


def refit_config(cfg: SwarmConfig, base_seed: int, index: int) -> SwarmConfig:
    """Swarm settings with a fresh deterministic seed for one refit."""
    return replace(cfg, rng_seed=derive_seed(base_seed, index))
