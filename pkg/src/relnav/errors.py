"""Exception types shared across the package."""


class RelNavError(Exception):
    """Base class; ``code`` is used for machine-readable CLI errors."""

    code = "relnav_error"


class UnobservableError(RelNavError):
    """Scale ambiguity unresolved: the IROD system is rank deficient or unforced."""

    code = "scale_ambiguity_unresolved"


class SingularStmError(RelNavError):
    """``phi_rv(T)`` is singular (T is a multiple of the orbital period)."""

    code = "singular_stm"


class DegenerateGeometryError(RelNavError):
    code = "degenerate_geometry"


class SurfaceImpactError(RelNavError):
    code = "below_earth_radius"


class EmptyInputSetError(RelNavError):
    code = "empty_input_set"
