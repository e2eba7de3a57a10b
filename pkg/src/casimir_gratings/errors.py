"""Exception hierarchy shared by all modules."""


class CasimirGratingsError(Exception):
    """Base class for errors raised by this package."""


class DomainError(CasimirGratingsError, ValueError):
    """Input outside the physical or mathematical domain of an operation."""


class SolverError(CasimirGratingsError, RuntimeError):
    """Numerical solver failed or produced an inconsistent spectrum.

    Carries enough context (kappa, kx, M) to reproduce the failing point.
    """

    def __init__(self, message, *, kappa=None, kx=None, M=None):
        ctx = []
        if kappa is not None:
            ctx.append(f"kappa={kappa:.6g}")
        if kx is not None:
            ctx.append(f"kx={kx:.6g}")
        if M is not None:
            ctx.append(f"M={M}")
        if ctx:
            message = f"{message} [{', '.join(ctx)}]"
        super().__init__(message)
        self.kappa = kappa
        self.kx = kx
        self.M = M


class MatchingError(SolverError):
    """The fundamental mode could not be paired with any eigenvalue."""


class IllConditionedError(SolverError):
    """Boundary-condition system too ill-conditioned to solve reliably."""
