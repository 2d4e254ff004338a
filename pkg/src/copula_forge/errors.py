"""Exception types shared across the package."""


class CopulaForgeError(Exception):
    """Base class for all package errors."""


class DomainError(CopulaForgeError):
    """An argument lies outside the mathematical domain of an operation."""


class ParameterError(DomainError):
    """A family parameter lies outside its admissible range."""


class UnsupportedOrderError(CopulaForgeError):
    """A derivative order is not available for this generator family."""


class UnsupportedLatentError(CopulaForgeError):
    """The family has no latent-variable sampler."""


class SolverError(CopulaForgeError):
    """A root finder failed to converge; carries diagnostics."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ContractError(CopulaForgeError):
    """Caller violated an internal API contract (shape/length mismatch)."""


class BoundaryError(DomainError):
    """Density requested on the boundary of the unit cube."""


class DensityUnderflowError(CopulaForgeError):
    """All log-sum-exp terms underflowed; density is numerically zero."""


class IngestionError(CopulaForgeError):
    """Raw data could not be ingested (non-finite values, bad CSV)."""


class ModelFormatError(CopulaForgeError):
    """A model file is corrupt, truncated, or has an unknown version."""
