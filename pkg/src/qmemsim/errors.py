"""Exception hierarchy shared by all qmemsim modules."""


class QmemsimError(Exception):
    """Base class for every error raised by qmemsim."""


class InvalidArgumentError(QmemsimError, ValueError):
    """An argument is outside the domain an operation accepts."""


class FormatError(QmemsimError, ValueError):
    """A file or spec string could not be parsed."""


class ValidationError(QmemsimError, ValueError):
    """Parsed input violates a physical invariant (e.g. normalization)."""


class IntegrationError(QmemsimError, RuntimeError):
    """Time integration stopped before reaching the requested end time.

    The trace recorded up to the failure is kept on ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class StiffnessError(IntegrationError):
    """The step size collapsed below the floating-point resolution of t."""


class NoCrossingError(QmemsimError, RuntimeError):
    """Fidelity never fell below the target within the integration horizon."""

    def __init__(self, message, horizon=None, final_fidelity=None):
        super().__init__(message)
        self.horizon = horizon
        self.final_fidelity = final_fidelity


class UndefinedRatioError(QmemsimError, ZeroDivisionError):
    """A predicted ratio has a vanishing denominator (e.g. vacuum state)."""


class SolverError(QmemsimError, RuntimeError):
    """A scalar root-finder could not bracket a root."""


class UnsupportedError(QmemsimError, NotImplementedError):
    """The requested computation is not supported for this input size/structure."""
