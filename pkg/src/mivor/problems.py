"""Benchmark functions, physical-domain handling, the external black-box
protocol, dense reference sets and the per-class accuracy metric."""

from __future__ import annotations

import select
import subprocess
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .controller import ClassRule, classify_many
from .design import tplhd
from .errors import ContractViolationError, EvaluationError
from .kriging import KrigingModel, predict_many


@dataclass(frozen=True)
class ParameterDomain:
    """Axis-aligned box of physical input bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.size < 1 or lower.shape != upper.shape:
            raise ContractViolationError("domain bounds must be equal-length, nonempty vectors")
        if not np.all(upper > lower):
            raise ContractViolationError("every upper bound must exceed its lower bound")

    @property
    def dimension(self) -> int:
        return self.lower.size


def normalize(x: np.ndarray, domain: ParameterDomain) -> np.ndarray:
    """Map physical coordinates onto [0,1]^n; rejects out-of-domain input.

    Works on a single point or a stack of points (last axis = dimension).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != domain.dimension:
        raise ContractViolationError(f"expected points of dimension {domain.dimension}")
    if np.any(x < domain.lower) or np.any(x > domain.upper):
        raise ContractViolationError("point outside the parameter domain")
    return np.clip((x - domain.lower) / (domain.upper - domain.lower), 0.0, 1.0)


def denormalize(u: np.ndarray, domain: ParameterDomain) -> np.ndarray:
    """Inverse of :func:`normalize`.

    Computed as the convex combination of the bounds and clipped, so the
    result never leaves the domain by round-off even at u = 0 or 1.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != domain.dimension:
        raise ContractViolationError(f"expected points of dimension {domain.dimension}")
    return np.clip(domain.lower * (1.0 - u) + domain.upper * u, domain.lower, domain.upper)


# ---------------------------------------------------------------------------
# benchmark functions (numpy-polymorphic: scalars or arrays)
# ---------------------------------------------------------------------------

def higdon(x):
    """Smooth two-frequency sine benchmark on [-10, 10]."""
    x = np.asarray(x, dtype=float)
    return np.sin(2.0 * np.pi * x / 10.0) + 0.2 * np.sin(2.0 * np.pi * x / 2.5) - 0.5


def modified_higdon(x):
    """Discontinuous variant of :func:`higdon` on [-10, 10]: the sine branch
    for x < 0, a shifted exponential on [0, 4) and a flat low-amplitude sine
    beyond, with a jump of height 0.5 at x = 0."""
    x = np.asarray(x, dtype=float)
    return np.where(
        x < 0.0,
        np.sin(2.0 * np.pi * x / 10.0) + 0.2 * np.sin(2.0 * np.pi * x / 2.5) - 0.5,
        np.where(x < 4.0, -np.exp(-x) + 0.1 * x, -0.1 * np.sin(x) - 0.06),
    )


def michalewicz1d(x):
    """Sharply windowed sine benchmark on [-10, 0]; with limit 0 its
    above-limit set splits into six disconnected intervals."""
    x = np.asarray(x, dtype=float)
    return -0.6 * np.sin(x) * np.sin(x * x / np.pi) ** 20 - 0.1


def modified_dropwave(x):
    """Discontinuous two-dimensional drop-wave variant.

    Above the diagonal (x2 > x1): 1 - |x1 x2|.  Elsewhere the oscillating
    radial bowl -(1 + cos(12 rho)) / (0.5 rho^2 + 2) + 0.05.  On the
    calibrated domain [1,2] x [0,2] the above-limit set (limit 0) covers
    about 14.7% of the area in three disconnected subdomains.
    """
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    rho2 = x1 * x1 + x2 * x2
    bowl = -(1.0 + np.cos(12.0 * np.sqrt(rho2))) / (0.5 * rho2 + 2.0) + 0.05
    return np.where(x2 > x1, 1.0 - np.abs(x1 * x2), bowl)


#: Calibrated drop-wave domain: selected by :func:`calibrate_dropwave_domain`
#: as the candidate reading whose above-limit fraction and subdomain count
#: match the published reference classification.
DROPWAVE_DOMAIN = ParameterDomain(lower=(1.0, 0.0), upper=(2.0, 2.0))


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Problem:
    """A named black box over a physical domain.

    ``evaluator`` maps one physical point to a scalar; ``vector_evaluator``
    optionally maps a stack of points to a value array (used to build large
    reference sets quickly).
    """

    name: str
    domain: ParameterDomain
    evaluator: Callable[[np.ndarray], float]
    vector_evaluator: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    def evaluate(self, x: np.ndarray) -> float:
        value = float(self.evaluator(np.asarray(x, dtype=float)))
        if not np.isfinite(value):
            raise EvaluationError(f"{self.name}: non-finite output {value!r} at {x!r}")
        return value

    def evaluate_normalized(self, u: np.ndarray) -> float:
        return self.evaluate(denormalize(u, self.domain))

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.vector_evaluator is not None:
            values = np.asarray(self.vector_evaluator(points), dtype=float).ravel()
        else:
            values = np.array([float(self.evaluator(p)) for p in points])
        if not np.all(np.isfinite(values)):
            raise EvaluationError(f"{self.name}: non-finite output in batch evaluation")
        return values


def _scalar1d(fn) -> Callable[[np.ndarray], float]:
    return lambda x: float(fn(np.asarray(x, dtype=float).ravel()[0]))


def higdon_problem() -> Problem:
    return Problem("higdon", ParameterDomain((-10.0,), (10.0,)), _scalar1d(higdon),
                   lambda pts: higdon(pts[:, 0]))


def modified_higdon_problem() -> Problem:
    return Problem("modified-higdon", ParameterDomain((-10.0,), (10.0,)),
                   _scalar1d(modified_higdon), lambda pts: modified_higdon(pts[:, 0]))


def michalewicz_problem() -> Problem:
    return Problem("michalewicz", ParameterDomain((-10.0,), (0.0,)),
                   _scalar1d(michalewicz1d), lambda pts: michalewicz1d(pts[:, 0]))


def dropwave_problem(domain: ParameterDomain = DROPWAVE_DOMAIN) -> Problem:
    return Problem("modified-dropwave", domain,
                   lambda x: float(modified_dropwave(np.asarray(x, dtype=float).ravel())),
                   modified_dropwave)


BUILTIN_PROBLEMS: dict[str, Callable[[], Problem]] = {
    "higdon": higdon_problem,
    "modified-higdon": modified_higdon_problem,
    "michalewicz": michalewicz_problem,
    "modified-dropwave": dropwave_problem,
}


# ---------------------------------------------------------------------------
# external black boxes
# ---------------------------------------------------------------------------

class ExternalEvaluator:
    """Line protocol client for an external simulator process.

    One request is a single line of space-separated decimal coordinates on
    the child's stdin; the response is one decimal number on one line of its
    stdout, answered in request order.  Anything else (timeout, exit,
    unparsable or non-finite output) raises EvaluationError.
    """

    def __init__(self, command: Sequence[str], timeout: float = 30.0):
        self.command = list(command)
        self.timeout = float(timeout)
        self._child: subprocess.Popen | None = None

    def _ensure_child(self) -> subprocess.Popen:
        if self._child is None or self._child.poll() is not None:
            self._child = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._child

    def _read_line(self, child: subprocess.Popen) -> str:
        ready, _, _ = select.select([child.stdout], [], [], self.timeout)
        if not ready:
            self.close()
            raise EvaluationError(f"black box timed out after {self.timeout:g}s: {self.command}")
        line = child.stdout.readline()
        if line == "":
            code = child.poll()
            self.close()
            raise EvaluationError(f"black box exited (code {code}) before answering")
        return line

    def __call__(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float).ravel()
        child = self._ensure_child()
        request = " ".join(repr(float(v)) for v in x) + "\n"
        try:
            child.stdin.write(request)
            child.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise EvaluationError(f"black box rejected request {request!r}: {exc}") from exc
        line = self._read_line(child)
        fields = line.split()
        try:
            if len(fields) != 1:
                raise ValueError("expected exactly one number")
            value = float(fields[0])
        except ValueError as exc:
            self.close()
            raise EvaluationError(f"black box sent unparsable response {line!r}") from exc
        if not np.isfinite(value):
            self.close()
            raise EvaluationError(f"black box sent non-finite response {line!r}")
        return value

    def close(self) -> None:
        child, self._child = self._child, None
        if child is not None and child.poll() is None:
            child.kill()
            child.wait()

    def __enter__(self) -> "ExternalEvaluator":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def external_problem(
    command: Sequence[str],
    lower: Sequence[float],
    upper: Sequence[float],
    name: str = "external",
    timeout: float = 30.0,
) -> Problem:
    """Problem backed by an external process speaking the line protocol."""
    return Problem(name, ParameterDomain(tuple(lower), tuple(upper)),
                   ExternalEvaluator(command, timeout))


# ---------------------------------------------------------------------------
# reference sets and accuracy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceSet:
    """Dense labeled evaluation grid in physical coordinates."""

    points: np.ndarray   # (k, n) physical
    values: np.ndarray   # (k,)
    labels: np.ndarray   # (k,) bool, True = C1
    domain: ParameterDomain

    @property
    def counts(self) -> tuple[int, int]:
        c1 = int(np.count_nonzero(self.labels))
        return c1, self.labels.size - c1


@dataclass(frozen=True)
class ErrorReport:
    """Fraction of reference points of each class the surrogate classifies correctly."""

    ap_c1: float
    ap_c2: float
    m: int


def build_reference(problem: Problem, rule: ClassRule, density: int = 5000) -> ReferenceSet:
    """Space-filling reference of density * dimension labeled points."""
    if density < 1:
        raise ContractViolationError("reference density must be positive")
    n = problem.dimension
    points = denormalize(tplhd(density * n, n), problem.domain)
    values = problem.evaluate_batch(points)
    return ReferenceSet(points, values, classify_many(values, rule), problem.domain)


def accuracy(model: KrigingModel, reference: ReferenceSet, rule: ClassRule) -> ErrorReport:
    """Classify the surrogate mean at every reference point.

    A class absent from the reference reports 1.0 by convention (nothing to
    misclassify) with a warning.
    """
    means, _ = predict_many(model, normalize(reference.points, reference.domain))
    predicted = means >= rule.limit
    actual = reference.labels
    rates = []
    for cls, name in ((True, "C1"), (False, "C2")):
        total = int(np.count_nonzero(actual == cls))
        if total == 0:
            warnings.warn(f"reference set contains no {name} points; reporting 1.0")
            rates.append(1.0)
        else:
            rates.append(int(np.count_nonzero((actual == cls) & (predicted == cls))) / total)
    return ErrorReport(ap_c1=rates[0], ap_c2=rates[1], m=model.data.m)


def c1_interval_count(reference: ReferenceSet) -> int:
    """Number of maximal runs of consecutive above-limit labels along a 1-D reference."""
    if reference.domain.dimension != 1:
        raise ContractViolationError("interval counting is defined for 1-D references")
    order = np.argsort(reference.points[:, 0], kind="stable")
    labels = reference.labels[order].astype(int)
    starts = np.diff(np.concatenate([[0], labels])) == 1
    return int(starts.sum())


# ---------------------------------------------------------------------------
# drop-wave domain calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DropwaveCalibration:
    """Outcome of the candidate-domain scan; ``domain`` is None when no
    reading reproduces the published classification structure."""

    domain: ParameterDomain | None
    diagnostics: list[dict] = field(default_factory=list)


def dropwave_candidate_domains() -> list[ParameterDomain]:
    """Sign and permutation readings of the corrupted printed bounds.

    The printed domain digits are {1, 0, 2, 2}; every split of that multiset
    into two ordered intervals, under every sign choice, is a candidate.
    """
    def signed_intervals(a: float, b: float) -> list[tuple[float, float]]:
        out = set()
        for sa in (a, -a):
            for sb in (b, -b):
                lo, hi = min(sa, sb), max(sa, sb)
                if lo < hi:
                    out.add((lo, hi))
        return sorted(out, key=lambda t: (-(t[0] + t[1]), t))

    splits = [((0.0, 1.0), (2.0, 2.0)), ((2.0, 2.0), (0.0, 1.0)),
              ((1.0, 2.0), (0.0, 2.0)), ((0.0, 2.0), (1.0, 2.0))]
    domains, seen = [], set()
    for first, second in splits:
        for x1 in signed_intervals(*first):
            for x2 in signed_intervals(*second):
                key = (x1, x2)
                if key not in seen:
                    seen.add(key)
                    domains.append(ParameterDomain((x1[0], x2[0]), (x1[1], x2[1])))
    return domains


def count_c1_regions_2d(
    fn: Callable[[np.ndarray], np.ndarray],
    domain: ParameterDomain,
    rule: ClassRule,
    grid: int = 400,
    min_area_fraction: float = 1e-3,
) -> int:
    """Connected above-limit regions on a dense grid (4-connectivity).

    Regions smaller than ``min_area_fraction`` of the domain are ignored;
    they are below the resolution of the dense reference set.
    """
    g1 = np.linspace(domain.lower[0], domain.upper[0], grid)
    g2 = np.linspace(domain.lower[1], domain.upper[1], grid)
    mesh = np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1)
    mask = np.asarray(fn(mesh), dtype=float) >= rule.limit
    labeled, total = ndimage.label(mask)
    if total == 0:
        return 0
    sizes = np.bincount(labeled.ravel())[1:]
    return int(np.count_nonzero(sizes / mask.size >= min_area_fraction))


def calibrate_dropwave_domain(
    candidates: Sequence[ParameterDomain] | None = None,
    rule: ClassRule = ClassRule(0.0),
    density: int = 5000,
    target_fraction: float = 0.1475,
    fraction_tolerance: float = 0.02,
    expected_regions: int = 3,
) -> DropwaveCalibration:
    """Pick the first candidate domain matching the published classification.

    A candidate passes when its dense reference has an above-limit fraction
    within ``fraction_tolerance`` of ``target_fraction`` and exactly
    ``expected_regions`` substantive connected above-limit regions.
    """
    chosen = None
    diagnostics = []
    for domain in candidates if candidates is not None else dropwave_candidate_domains():
        reference = build_reference(dropwave_problem(domain), rule, density)
        fraction = reference.counts[0] / reference.labels.size
        regions = count_c1_regions_2d(modified_dropwave, domain, rule)
        passed = abs(fraction - target_fraction) <= fraction_tolerance and regions == expected_regions
        diagnostics.append({
            "lower": domain.lower.tolist(),
            "upper": domain.upper.tolist(),
            "c1_fraction": fraction,
            "c1_regions": regions,
            "passed": passed,
        })
        if passed and chosen is None:
            chosen = domain
    return DropwaveCalibration(chosen, diagnostics)
