"""Exception types shared across the package."""


class StabmixError(Exception):
    pass


class OverflowToInfinity(StabmixError, OverflowError):
    """Value exceeds the target format's range and clamping is disabled."""


class DivisionByZero(StabmixError, ZeroDivisionError):
    pass


class DimensionMismatch(StabmixError, ValueError):
    pass


class ZeroMatrix(StabmixError, ValueError):
    pass


class InvalidStages(StabmixError, ValueError):
    pass


class InvalidMesh(StabmixError, ValueError):
    pass


class NonFiniteState(StabmixError, FloatingPointError):
    """An integrator stage produced inf/nan."""


class NonLinearProblem(StabmixError, ValueError):
    pass


class MismatchedSampling(StabmixError, ValueError):
    pass


class NoConvergenceWarning(UserWarning):
    """Power iteration hit the iteration cap; last estimate is returned."""


class DegenerateDeltaWarning(UserWarning):
    """Finite-difference shift underflows the low-precision format."""


class OverflowWarning(UserWarning):
    """Values clamped to +-x_max during rounding."""
