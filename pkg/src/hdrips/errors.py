"""Exception and warning types shared across the package."""


class ParameterError(ValueError):
    """An input lies outside the admissible parameter range."""


class CapacityError(OverflowError):
    """A count exceeded the capacity of its accumulation register."""


class AnalyticOverflowError(OverflowError):
    """A closed-form quantity does not fit in double precision."""


class InconclusivePhaseError(RuntimeError):
    """The tail of a schedule shows no monotone trend and no convergence."""


class OutsideAnalyticRangeWarning(UserWarning):
    """Raised for radii at or above 1/4, where the analytic bounds do not apply."""
