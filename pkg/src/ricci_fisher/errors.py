"""Exception hierarchy shared by every module."""


class RicciFisherError(Exception):
    """Base class for all package errors."""


class UnsupportedFamilyError(RicciFisherError, TypeError):
    """Operation is not defined for the given metric family."""


class GridMismatchError(RicciFisherError, ValueError):
    """Field and metric live on different grids, or shapes disagree."""


class SingularMatrixError(RicciFisherError, ValueError):
    pass


class PositivityError(RicciFisherError, ValueError):
    """A density (or P) has a non-positive node value."""


class CFLError(RicciFisherError, ValueError):
    """Explicit step exceeds the parabolic stability bound."""

    def __init__(self, dt: float, bound: float):
        super().__init__(f"dt={dt!r} exceeds the parabolic step bound {bound!r}")
        self.dt = dt
        self.bound = bound


class ExtinctionError(RicciFisherError, ValueError):
    """A shrinking sphere reached (or would pass) zero scale."""

    def __init__(self, message: str, extinction_time: float):
        super().__init__(f"{message} (extinction at t~{extinction_time!r})")
        self.extinction_time = extinction_time


class ConservationError(RicciFisherError, RuntimeError):
    def __init__(self, drift: float, index: int):
        super().__init__(f"mass drift {drift!r} at snapshot {index} exceeds tolerance")
        self.drift = drift
        self.index = index


class StateError(RicciFisherError, ValueError):
    """Object is missing data required by the operation (e.g. densities)."""


class UnderdeterminedError(RicciFisherError, ValueError):
    pass


class CompatibilityError(RicciFisherError, ValueError):
    def __init__(self, defect: float, threshold: float):
        super().__init__(
            f"right-hand side is incompatible on a closed grid: |int rhs dV|={abs(defect)!r} > {threshold!r}"
        )
        self.defect = defect


class IterationError(RicciFisherError, RuntimeError):
    """Iterative method failed to converge; carries the residual history."""

    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


class ConfigError(RicciFisherError, ValueError):
    pass
