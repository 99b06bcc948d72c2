"""Exception hierarchy shared by all mivor modules."""


class MivorError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolationError(MivorError, ValueError):
    """A caller violated a documented precondition (bad shapes, empty sets, ...)."""


class DegenerateDatasetError(MivorError, ValueError):
    """The dataset is too small or otherwise unusable for model fitting."""


class IllConditionedModelError(MivorError, RuntimeError):
    """The correlation matrix could not be factorized at the requested nugget."""


class FitFailureError(MivorError, RuntimeError):
    """Hyperparameter optimization found no factorizable candidate at all."""


class EvaluationError(MivorError, RuntimeError):
    """A black-box evaluation failed or returned a non-finite value."""
