"""Adaptive kriging classification of binary decision regions.

An ordinary-kriging surrogate learns where a continuous black box crosses a
limit value; new observations alternate randomly between space-filling
exploration and Voronoi-guided sampling along the predicted class boundary,
with the exploration rate decaying geometrically over the run.
"""

from .controller import ClassRule, MivorConfig, MivorState, StepRecord, classify, mivor_step, run
from .design import MonteCarloPool, mc_pool, rng_stream, tplhd
from .errors import (
    ContractViolationError,
    DegenerateDatasetError,
    EvaluationError,
    FitFailureError,
    IllConditionedModelError,
    MivorError,
)
from .kriging import (
    Dataset,
    Hyperparameters,
    KrigingModel,
    NuggetPolicy,
    SwarmConfig,
    fit,
    matern32,
    predict,
    predict_many,
    reduced_likelihood,
)
from .mipt import mipt_score, select_mipt
from .problems import (
    ErrorReport,
    ExternalEvaluator,
    ParameterDomain,
    Problem,
    ReferenceSet,
    accuracy,
    build_reference,
    calibrate_dropwave_domain,
    denormalize,
    external_problem,
    higdon,
    michalewicz1d,
    modified_dropwave,
    modified_higdon,
    normalize,
)
from .voronoi import (
    CellScore,
    ExploitDecision,
    VolumeEstimate,
    accept_or_substitute,
    estimate_volumes,
    neighborhood_count,
    rank_cells,
    select_candidate,
    space_filling_metric,
)

__version__ = "0.1.0"
