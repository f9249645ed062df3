"""Exception types shared across the package."""


class FpsiError(Exception):
    """Base class for all package errors."""


class MeshError(FpsiError):
    """Invalid, non-conforming or inconsistently marked mesh."""


class ConfigError(FpsiError):
    """Malformed run configuration (unknown key, bad value, missing section)."""


class AssemblyError(FpsiError):
    """Inconsistent assembly input (missing subdomain, bad coefficient)."""


class DegenerateDeformationError(FpsiError):
    """det F dropped below the positivity threshold somewhere.

    Carries the offending cell id so the failure is attributable.
    """

    def __init__(self, message, cell=None, value=None):
        super().__init__(message)
        self.cell = cell
        self.value = value


class SolverError(FpsiError):
    """Direct solve failed or the verified residual exceeded tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
