"""Exception types shared across the package."""


class CageLabError(Exception):
    """Base class for all package-specific errors."""


class SpacingMisaligned(CageLabError):
    """Grid spacing does not divide delta/8, so box faces would miss grid planes."""


class InvalidEpsilon(CageLabError):
    """Permittivity outside the admissible half-plane (requires Re > 0 and Im > 0)."""


class SchemaError(CageLabError):
    """Configuration document is malformed; carries the offending field name."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NotConstructible(CageLabError):
    """Requested tangential Dirichlet potential is topologically obstructed."""


class CutMismatch(CageLabError):
    """Cut set inconsistent with the requested case or jump direction."""


class SolverDiverged(CageLabError):
    """Linear solve failed to reach the requested tolerance."""


class PlaneOutOfRange(CageLabError):
    """Measurement plane lies outside the computational domain."""


class ProfileInvalid(CageLabError):
    """Test profile violates the admissibility conditions (vanish near 0, decay)."""


class AbortOnBudget(CageLabError):
    """Projected problem size exceeds the configured cap."""
