"""Exception types shared across the package."""


class SmFilterError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SmFilterError, ValueError):
    """Array shapes are inconsistent with each other."""


class NotPositiveDefinite(SmFilterError, ValueError):
    """A shape matrix is not (numerically) positive definite."""


class SingularTransform(SmFilterError, ValueError):
    """An affine map that must be invertible is singular."""


class UnknownVariable(SmFilterError, KeyError):
    """A program references a decision variable that was never registered."""


class OutOfBall(SmFilterError, ValueError):
    """A remainder evaluation point lies outside the unit ball."""


class OnSensorRadial(SmFilterError, ValueError):
    """A range-bearing map was evaluated on the sensor's blind radial."""


class SolverFailure(SmFilterError, RuntimeError):
    """The conic solver broke down numerically or returned garbage."""


class IntervalBlowup(SmFilterError, ArithmeticError):
    """An interval enclosure is unbounded (division through zero)."""


class BoundaryNotApplicable(SmFilterError, RuntimeError):
    """Boundary-only sampling was requested where its precondition fails."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class InfeasiblePrediction(SmFilterError, RuntimeError):
    """The prediction program is infeasible: measurement contradicts the model bounds."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class InfeasibleUpdate(SmFilterError, RuntimeError):
    """The measurement-update program is infeasible."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class WeightCollapse(SmFilterError, RuntimeError):
    """All particle likelihoods vanished (no particle is measurement-consistent)."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class RejectionStall(SmFilterError, RuntimeError):
    """Rejection sampling accepts too rarely; the noise config is mis-specified."""


class ConfigError(SmFilterError, ValueError):
    """A benchmark configuration file is missing or invalid."""
