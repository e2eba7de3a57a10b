"""C-method matrices, the quadratic eigenvalue problem, and mode matching.

Fourier-transforming the Helmholtz operator in profile-following
coordinates turns the scattering problem into the quadratic eigenvalue
problem

    lambda^2 (A2 - I) V - lambda A1 V + A0 V = 0,

with A2 = Gh.Gh, A1 = K.Gh + Gh.K and A0 = kappa^2 I + K.K built from the
diagonal Bloch-vector matrix K and the Toeplitz matrix
(Gh)_{mm'} = G_{m-m'} h_{m-m'}.  The problem is solved through the
companion pencil

    [[0, I], [-A0, A1]] W = lambda [[I, 0], [0, A2 - I]] W,

whose eigenvectors carry V in their first N components.  Eigenvalues with
negative real part describe outgoing (decaying) waves; those close to a
negative Rayleigh wavenumber -lambda_m are trusted and matched to the
Fourier mode m.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DomainError, MatchingError, SolverError
from .profiles import GratingProfile, SpectralPoint

logger = logging.getLogger(__name__)

#: |Re(lambda)| below this fraction of max(lambda_m) marks a grazing mode,
#: which cannot occur at kappa > 0 and is treated as a solver failure.
_GRAZING_RTOL = 1e-10

DEFAULT_MATCH_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class CMethodMatrices:
    """Matrices of the quadratic eigenvalue problem at one spectral point."""

    point: SpectralPoint
    Gh: np.ndarray
    K: np.ndarray
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray


@dataclass(eq=False)
class ModalSolution:
    """Decaying eigenpairs of the QEP, optionally with their mode matching.

    ``eigenvalues[q]`` (Re < 0) and eigenvector columns ``eigenvectors[:, q]``
    are sorted by ascending |Im lambda| then |lambda|, so q = 0 is the mode
    nearest -lambda_0.  Each eigenvector is normalized so its largest
    component equals 1.  ``matching`` maps the Fourier index m to the column
    q; it covers complete rings |m| <= M_keep only.
    """

    point: SpectralPoint
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    matching: dict[int, int] | None = None
    M_keep: int | None = None

    @property
    def N(self) -> int:
        return self.eigenvalues.shape[0]


def assemble_matrices(profile: GratingProfile, point: SpectralPoint) -> CMethodMatrices:
    """Build Gh, K and the three QEP matrices for ``profile`` at ``point``.

    The profile may carry harmonics beyond the mode window; they are
    truncated by construction.  A2 is the finite product Gh.Gh, so
    truncation effects enter at the matrix corners exactly as they do in
    the solver.
    """
    if profile.period != point.period:
        raise DomainError(
            f"profile period {profile.period} != spectral point period {point.period}"
        )
    N = point.N
    j = np.arange(-2 * point.M, 2 * point.M + 1)
    gh_line = (2.0 * np.pi * j / point.period) * np.array(
        [profile.coefficient(int(m)) for m in j], dtype=complex
    )
    diff = point.modes[:, None] - point.modes[None, :]
    Gh = gh_line[diff + 2 * point.M]

    K = np.diag(point.K).astype(complex)
    A0 = np.diag(point.kappa**2 + point.K**2).astype(complex)
    A1 = K @ Gh + Gh @ K
    A2 = Gh @ Gh
    return CMethodMatrices(point=point, Gh=Gh, K=K, A0=A0, A1=A1, A2=A2)


def solve_qep(mats: CMethodMatrices) -> ModalSolution:
    """Solve the companion pencil and keep the decaying half of the spectrum.

    Raises
    ------
    SolverError
        If the dense eigensolver fails, produces non-finite eigenvalues,
        finds a grazing mode (|Re lambda| ~ 0), or the spectrum does not
        split into N decaying and N growing eigenvalues.
    """
    point = mats.point
    N = point.N
    A = np.zeros((2 * N, 2 * N), dtype=complex)
    A[:N, N:] = np.eye(N)
    A[N:, :N] = -mats.A0
    A[N:, N:] = mats.A1
    B = np.zeros_like(A)
    B[:N, :N] = np.eye(N)
    B[N:, N:] = mats.A2 - np.eye(N)

    try:
        w, vecs = scipy.linalg.eig(A, B, check_finite=False)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise SolverError(
            f"generalized eigensolver failed: {exc}",
            kappa=point.kappa, kx=point.kx, M=point.M,
        ) from exc

    if not np.all(np.isfinite(w)):
        raise SolverError(
            "pencil produced non-finite eigenvalues (A2 - I singular?)",
            kappa=point.kappa, kx=point.kx, M=point.M,
        )
    lam_scale = float(point.lambda_tilde.max())
    if np.any(np.abs(w.real) < _GRAZING_RTOL * lam_scale):
        raise SolverError(
            "eigenvalue with vanishing real part: grazing mode",
            kappa=point.kappa, kx=point.kx, M=point.M,
        )
    neg = w.real < 0.0
    if int(neg.sum()) != N:
        raise SolverError(
            f"expected {N}/{N} split of decaying/growing eigenvalues, "
            f"got {int(neg.sum())}/{int((~neg).sum())}",
            kappa=point.kappa, kx=point.kx, M=point.M,
        )

    lam = w[neg]
    V = vecs[:N, neg]
    order = np.lexsort((np.abs(lam), np.abs(lam.imag)))
    lam = lam[order]
    V = V[:, order]
    # normalize so the largest component of each eigenvector is exactly 1
    peaks = np.argmax(np.abs(V), axis=0)
    V = V / V[peaks, np.arange(N)]
    return ModalSolution(point=point, eigenvalues=lam, eigenvectors=V)


def _match_order(M: int):
    yield 0
    for k in range(1, M + 1):
        yield -k
        yield +k


def match_eigenvalues(
    sol: ModalSolution,
    point: SpectralPoint,
    match_tol: float = DEFAULT_MATCH_TOL,
) -> tuple[dict[int, int], int]:
    """Greedily pair eigenvalues with Rayleigh wavenumbers from m = 0 outward.

    Mode m matches eigenvalue q when the symmetric relative difference
    |lambda_q + lambda_m| / (|lambda_q| + lambda_m) is below ``match_tol``;
    each eigenvalue is used at most once and smaller |m| claims first.
    Matching proceeds in rings 0, -1, +1, -2, +2, ... and stops at the
    first |m| that fails; only complete rings count, so ``M_keep`` is the
    largest k with all |m| <= k matched.  The result is stored on ``sol``
    and returned.

    Raises
    ------
    MatchingError
        If m = 0 has no match: the fundamental mode must always pair up,
        so this signals M too small or an amplitude too large.
    """
    lam = sol.eigenvalues
    used = np.zeros(sol.N, dtype=bool)
    matching: dict[int, int] = {}
    M_keep = -1

    for m in _match_order(point.M):
        target = point.lambda_tilde[point.index(m)]
        dist = np.abs(lam + target) / (np.abs(lam) + target)
        candidates = np.flatnonzero(~used & (dist < match_tol))
        if candidates.size == 0:
            if m == 0:
                raise MatchingError(
                    "fundamental mode m=0 matches no eigenvalue "
                    f"(best relative mismatch {float(dist.min()):.3g}, "
                    f"tol {match_tol:g})",
                    kappa=point.kappa, kx=point.kx, M=point.M,
                )
            break
        if candidates.size == 1:
            q = int(candidates[0])
        else:
            # +/-m pairs are nearly degenerate at small kx; the eigenvector
            # dominant in component m identifies the right partner
            weight = np.abs(sol.eigenvectors[point.index(m), candidates])
            q = int(candidates[np.argmax(weight)])
            logger.debug(
                "mode m=%d: %d eigenvalue candidates within tol, picked by "
                "eigenvector dominance (kappa=%g, kx=%g, M=%d)",
                m, candidates.size, point.kappa, point.kx, point.M,
            )
        used[q] = True
        matching[m] = q
        if m >= 0:
            M_keep = abs(m)

    # drop an incomplete outermost ring (e.g. -k matched but +k failed)
    matching = {m: q for m, q in matching.items() if abs(m) <= M_keep}
    sol.matching = matching
    sol.M_keep = M_keep
    return matching, M_keep


def qep_residuals(mats: CMethodMatrices, sol: ModalSolution) -> np.ndarray:
    """Per-eigenpair residual norms |lambda^2 (A2-I) V - lambda A1 V + A0 V| / |V|."""
    lam = sol.eigenvalues
    V = sol.eigenvectors
    res = (
        (mats.A2 - np.eye(sol.N)) @ V * lam**2
        - mats.A1 @ V * lam
        + mats.A0 @ V
    )
    return np.linalg.norm(res, axis=0) / np.linalg.norm(V, axis=0)
