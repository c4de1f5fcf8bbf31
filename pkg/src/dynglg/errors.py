"""Exception hierarchy shared by every module of the package."""


class DynGLGError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(DynGLGError, ValueError):
    """A parameter lies outside its admissible domain."""


class DegenerateGeometryError(DynGLGError, ValueError):
    """Duplicate or otherwise degenerate site coordinates."""


class NumericalDefinitenessError(DynGLGError, ArithmeticError):
    """A matrix that must be positive definite could not be factorized.

    ``min_eigenvalue`` carries the smallest eigenvalue estimate when one
    was computed.
    """

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DesignRankError(DynGLGError, ValueError):
    """A design matrix does not have full row rank."""


class DegenerateChainError(DynGLGError, ValueError):
    """A chain segment has zero variance."""


class InitializationError(DynGLGError, RuntimeError):
    """The sampler could not be started from a finite log-posterior.

    ``dump`` maps factor names to their values at the failing state.
    """

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class NonFiniteError(DynGLGError, ArithmeticError):
    """A log-density factor evaluated to a non-finite value."""

    def __init__(self, message, factor=None):
        super().__init__(message)
        self.factor = factor


class SamplerBlockError(DynGLGError, RuntimeError):
    """An error raised inside one block of a Gibbs sweep."""

    def __init__(self, block, cause):
        super().__init__(f"block '{block}' failed: {cause}")
        self.block = block
        self.cause = cause


class TaskSpecificationError(DynGLGError, ValueError):
    """A prediction task is missing required inputs."""


class DataError(DynGLGError, ValueError):
    """Malformed or inconsistent input data."""


class ChainFormatError(DynGLGError, ValueError):
    """A persisted chain file is corrupt, truncated, or of another version."""


class PreconditionError(DynGLGError, ValueError):
    """An operation was called outside the regime where it is defined."""


class ChainVersionError(ChainFormatError):
    """A chain file was written by another format version and needs migrating."""


class ConfigError(DynGLGError, ValueError):
    """Unknown keys or malformed values in a run configuration."""
