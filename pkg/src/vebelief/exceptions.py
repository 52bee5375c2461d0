"""Exception hierarchy shared by all modules."""


class VEBeliefError(Exception):
    """Base class for errors raised by this package."""


class ParameterDomainError(VEBeliefError, ValueError):
    """A model parameter (or a probability it induces) is outside its domain."""


class UndefinedEstimandError(VEBeliefError, ArithmeticError):
    """A ratio estimand has a zero denominator."""


class PositivityError(VEBeliefError):
    """A stratum required by an identification formula has zero probability or count.

    The offending cell is available as ``cell`` (a dict of variable -> value).
    """

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = dict(cell) if cell else {}


class NotAssessableError(VEBeliefError):
    """The requested quantity needs a variable the data or model does not carry."""


class DataSchemaError(VEBeliefError, ValueError):
    """A dataset does not conform to the trial CSV schema."""


class ConfigError(VEBeliefError, ValueError):
    """A run configuration is malformed or incomplete."""


class DesignError(VEBeliefError, ValueError):
    """A regression design matrix is rank deficient."""


class EstimationError(VEBeliefError):
    """An estimator could not produce a value."""


class UnstableBootstrapError(EstimationError):
    """More than half of the bootstrap resamples failed."""
