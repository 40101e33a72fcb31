"""Exception types shared across the package."""


class PerisumError(Exception):
    """Base class for all package errors."""


class DomainError(PerisumError):
    """Evaluation requested at a point where the kernel is singular/undefined."""


class WoodAnomalyError(PerisumError):
    """A Floquet root (or a resonant z-stack denominator) is numerically zero.

    The spectral series degenerates at such parameter combinations; we fail
    loudly instead of regularizing.
    """


class NotConvergedError(PerisumError):
    """A truncated series failed to meet its tolerance within the term cap."""


class SeparationError(PerisumError):
    """Source/observer geometry violates the separation a series requires."""


class ValidationError(PerisumError):
    """Problem definition violates an invariant; carries the full report."""

    def __init__(self, report):
        self.report = report
        super().__init__("; ".join(report.messages))


class KernelCacheError(PerisumError):
    """A kernel blob failed header/consistency checks on load."""
