"""Exception types raised across the package."""


class MaxlabError(Exception):
    """Base class for all package errors."""


class RejectedInput(MaxlabError, ValueError):
    """Input is malformed or degenerate (non-finite samples, zero data, bad shapes)."""


class GridMismatch(RejectedInput):
    """Two objects live on different grids."""


class CompatibilityError(MaxlabError, ValueError):
    """A boundary trace is incompatible with the requested parity.

    ``components`` lists the offending component names.
    """

    def __init__(self, message: str, components: tuple[str, ...] = ()):
        super().__init__(message)
        self.components = tuple(components)


class UnsupportedCondition(MaxlabError, NotImplementedError):
    """A compatibility condition outside the supported hypotheses was requested."""


class EllipticityError(MaxlabError, ValueError):
    """Coefficients fail the uniform ellipticity bounds or cannot be inverted."""


class CFLError(MaxlabError, ValueError):
    """Time step violates the stability restriction."""


class AdmissibilityError(MaxlabError, ValueError):
    """An exponent pair is not Strichartz admissible."""


class BranchCutoffError(MaxlabError, ValueError):
    """A phase-space sample lies outside the requested conjugation branch."""


class SupportMarginError(MaxlabError, ValueError):
    """A field is supported too close to the boundary plane for the requested operation."""


class CostGuardError(MaxlabError, RuntimeError):
    """A dense operation would exceed the configured size limit."""


class ConfigError(MaxlabError, ValueError):
    """Configuration file or command line is invalid."""


class InvariantViolation(MaxlabError, RuntimeError):
    """A checked invariant failed during a run."""
