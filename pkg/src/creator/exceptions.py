"""Shared exception and warning types."""


class CreatorError(Exception):
    """Base class for errors raised by this package."""


class NumericalFailureError(CreatorError):
    """A linear-algebra routine failed to converge or returned non-finite values."""


class DegenerateDataError(CreatorError):
    """Input data carries no usable signal (zero rank, empty, all-constant)."""


class DegenerateSubspaceError(DegenerateDataError):
    """A spanning set contained only (numerically) zero vectors."""


class StructuralFailureError(CreatorError):
    """The recovery pipeline hit a state inconsistent with the model assumptions.

    `stage` names the pipeline stage (e.g. "ordering iteration 2").
    """

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class ConfigurationError(CreatorError):
    """Invalid configuration values or combinations."""


class PseudoInverseFallbackWarning(UserWarning):
    """A normal-equation solve was singular; minimum-norm pseudo-inverse used."""


class DegenerateInputWarning(UserWarning):
    """An estimator received degenerate input and returned a fallback value."""


class VacuousTestWarning(UserWarning):
    """A statistical test was run in a regime where it cannot discriminate."""
