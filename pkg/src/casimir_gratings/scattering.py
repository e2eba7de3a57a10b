"""Boundary conditions and Rayleigh reflection matrices.

The incident plane wave, rewritten in profile-following coordinates, has
Fourier coefficients

    L(+/-)_{mm'} = (1/L) Integral_0^L du exp(-i G_{m'-m} u +/- lambda_m h(u)),

normalized so both matrices tend to the identity as h -> 0.  For a pure
sinusoid of amplitude a the integral closes to modified Bessel functions,
L(+)_{mm'} = i^(m-m') I_{m-m'}(lambda_m a); general smooth profiles use an
FFT over one period (uniform trapezoid, spectrally accurate).

Rows of L grow like exp(lambda_m * max h), which overflows once
lambda_m * a gets large.  Rows past a threshold are therefore stored with
the factor exp(sigma_m) split off; the factors cancel in the reflection
matrix and are tracked explicitly through the boundary solve.

Applying the Dirichlet (TM) or Neumann (TE) condition to the modal
expansion yields one linear system per incident mode m,

    sum_q F_{m'q} c_{mq} = b_{mm'},

and the reflection matrix on the matched window is extracted as

    R_{mm'} = c_{m q(m')} (V_{q(m')})_{m'} / L(-)_{m'm'}.

The diagonal entry of L(-) anchors the normalization: the matched
eigenvector is proportional to the corresponding row of L(-), and its
m'-th component is the dominant one.  The ratio makes R independent of
eigenvector scaling.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import ive

from .errors import DomainError, IllConditionedError, SolverError
from .profiles import GratingProfile, Polarization, SpectralPoint
from .qep import (
    DEFAULT_MATCH_TOL,
    CMethodMatrices,
    ModalSolution,
    assemble_matrices,
    match_eigenvalues,
    solve_qep,
)

logger = logging.getLogger(__name__)

#: rows with lambda_m * max(h) beyond this are stored in scaled form
ROW_SCALE_THRESHOLD = 300.0

#: condition-number limit for the boundary system (known roundoff limit of
#: the method at large amplitude-to-period ratios)
CONDITION_LIMIT = 1e12

#: samples per period for the quadrature route
DEFAULT_L_SAMPLES = 4096

_L_DIAG_FLOOR = 1e-12


@dataclass(eq=False)
class LCoefficients:
    """Plane-wave Fourier coefficient matrices with per-row scaling.

    ``plus[m, :] = plus_scaled[m, :] * exp(log_scale_plus[m])`` and the
    same for ``minus``.  Scales are zero except for rows past
    :data:`ROW_SCALE_THRESHOLD`, so small problems see plain values.
    """

    plus_scaled: np.ndarray
    minus_scaled: np.ndarray
    log_scale_plus: np.ndarray
    log_scale_minus: np.ndarray

    @property
    def plus(self) -> np.ndarray:
        return self.plus_scaled * np.exp(self.log_scale_plus)[:, None]

    @property
    def minus(self) -> np.ndarray:
        return self.minus_scaled * np.exp(self.log_scale_minus)[:, None]


@dataclass(eq=False)
class BoundarySystem:
    """Linear system F c^T = b^T for the reflection coefficients.

    ``F[:, q]`` is indexed by the decaying eigenmode q (all N of them: the
    unmatched eigenvectors still span the solution space), ``b[m, :]`` by
    the incident mode m.  ``b_scaled`` carries the same row scaling as the
    L(+) matrix it is built from.
    """

    pol: Polarization
    F: np.ndarray
    b_scaled: np.ndarray
    b_log_scale: np.ndarray

    @property
    def b(self) -> np.ndarray:
        return self.b_scaled * np.exp(self.b_log_scale)[:, None]


@dataclass(eq=False)
class RayleighMatrix:
    """Reflection matrix on the matched mode window |m|, |m'| <= M_keep."""

    pol: Polarization
    entries: np.ndarray
    point: SpectralPoint
    M_keep: int


def _scales(lam: np.ndarray, h_extreme: float) -> np.ndarray:
    raw = lam * h_extreme
    return np.where(raw > ROW_SCALE_THRESHOLD, raw, 0.0)


def _l_sinusoid(a: float, point: SpectralPoint) -> LCoefficients:
    lam = point.lambda_tilde
    orders = point.modes[:, None] - point.modes[None, :]  # m - m'
    z = lam[:, None] * a
    sigma = _scales(lam, abs(a))
    # ive(n, z) = I_n(z) * exp(-|z|); restore exp(|z| - sigma_m) per row
    bess = ive(orders, z) * np.exp(np.abs(z) - sigma[:, None])
    plus = (1j) ** orders * bess
    minus = (-1j) ** orders * bess
    return LCoefficients(
        plus_scaled=plus,
        minus_scaled=minus,
        log_scale_plus=sigma,
        log_scale_minus=sigma.copy(),
    )


def _l_quadrature(
    profile: GratingProfile, point: SpectralPoint, samples: int
) -> LCoefficients:
    n = max(samples, 4 * point.N)
    u = np.arange(n) * (point.period / n)
    h = profile.height(u)
    lam = point.lambda_tilde
    sig_p = _scales(lam, max(h.max(), 0.0))
    sig_m = _scales(lam, max(-h.min(), 0.0))

    def rows(sign: float, sigma: np.ndarray) -> np.ndarray:
        # (1/L) Int du e^{-i G_{m'-m} u} e^{sign*lam_m h - sigma_m}: the
        # uniform mean is the trapezoid rule for periodic integrands, and
        # the FFT yields all frequencies at once.
        f = np.exp(sign * lam[:, None] * h[None, :] - sigma[:, None])
        spec = np.fft.fft(f, axis=1) / n
        # row m needs frequencies m' - m for every m'
        return np.stack(
            [spec[i, np.mod(point.modes - point.modes[i], n)] for i in range(point.N)]
        )

    plus = rows(+1.0, sig_p)
    minus = rows(-1.0, sig_m)
    return LCoefficients(
        plus_scaled=plus,
        minus_scaled=minus,
        log_scale_plus=sig_p,
        log_scale_minus=sig_m,
    )


def l_coefficients(
    profile: GratingProfile,
    point: SpectralPoint,
    samples: int = DEFAULT_L_SAMPLES,
    force_quadrature: bool = False,
) -> LCoefficients:
    """Fourier coefficients of the incident/scattered plane waves.

    Pure sinusoids use the closed Bessel form; anything else integrates
    over one period with ``samples`` uniform points.  ``force_quadrature``
    exists to cross-check the two routes against each other.
    """
    if profile.period != point.period:
        raise DomainError(
            f"profile period {profile.period} != spectral point period {point.period}"
        )
    a = profile.sinusoid_amplitude
    if a is not None and not force_quadrature:
        return _l_sinusoid(a, point)
    return _l_quadrature(profile, point, samples)


def build_boundary_system(
    pol: Polarization,
    sol: ModalSolution,
    mats: CMethodMatrices,
    L: LCoefficients,
    point: SpectralPoint,
) -> BoundarySystem:
    """Assemble F and b for the Dirichlet (TM) or Neumann (TE) condition."""
    lam_q = sol.eigenvalues
    V = sol.eigenvectors
    Lp = L.plus_scaled
    if pol is Polarization.TM:
        F = V.copy()
        b = -Lp
    else:
        W = mats.Gh @ mats.K
        P = np.eye(point.N) - mats.A2  # I - Gh.Gh
        F = W @ V + (P @ V) * lam_q[None, :]
        b = -(Lp @ W.T + point.lambda_tilde[:, None] * (Lp @ P.T))
    return BoundarySystem(pol=pol, F=F, b_scaled=b, b_log_scale=L.log_scale_plus.copy())


def solve_c_coefficients(F: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve sum_q F_{m'q} c_{mq} = B_{mm'} for all incident modes at once.

    Raises
    ------
    IllConditionedError
        If the condition number of F exceeds :data:`CONDITION_LIMIT`; this
        is the intrinsic roundoff limit of the method at large amplitudes.
    """
    lu, piv = scipy.linalg.lu_factor(F, check_finite=False)
    gecon = scipy.linalg.get_lapack_funcs(("gecon",), (F,))
    rcond, info = gecon[0](lu, np.linalg.norm(F, 1), norm="1")
    if info != 0 or rcond == 0.0 or 1.0 / rcond > CONDITION_LIMIT:
        cond = np.inf if rcond == 0.0 else 1.0 / rcond
        raise IllConditionedError(
            f"boundary system condition number {cond:.3g} exceeds {CONDITION_LIMIT:.0e}"
        )
    c = scipy.linalg.lu_solve((lu, piv), B.T, check_finite=False).T
    residual = np.linalg.norm(F @ c.T - B.T)
    logger.debug("boundary solve residual |F c^T - b^T| = %.3e", residual)
    return c


def rayleigh_matrix(
    pol: Polarization,
    c: np.ndarray,
    sol: ModalSolution,
    L: LCoefficients,
    c_row_log_scale: np.ndarray | None = None,
) -> RayleighMatrix:
    """Reflection matrix from the c coefficients on the matched window.

    ``c`` may carry the same per-row scaling as the b vectors it was
    solved from; pass the log-scales so they recombine with those of
    L(-).  Requires :func:`match_eigenvalues` to have run on ``sol``.
    """
    if sol.matching is None or sol.M_keep is None:
        raise SolverError("modal solution has no eigenvalue matching attached")
    point = sol.point
    Mk = sol.M_keep
    if c_row_log_scale is None:
        c_row_log_scale = np.zeros(point.N)

    size = 2 * Mk + 1
    R = np.empty((size, size), dtype=complex)
    for jp, mp in enumerate(range(-Mk, Mk + 1)):
        ip = point.index(mp)
        q = sol.matching[mp]
        ell = L.minus_scaled[ip, ip]
        log_ell = np.log(np.abs(ell)) + L.log_scale_minus[ip] if ell != 0 else -np.inf
        if log_ell < np.log(_L_DIAG_FLOOR):
            raise SolverError(
                f"normalization L(-)_{mp}{mp} below {_L_DIAG_FLOOR:g}: "
                "cannot identify reflection coefficients",
                kappa=point.kappa, kx=point.kx, M=point.M,
            )
        vq = sol.eigenvectors[ip, q]
        rows = slice(point.M - Mk, point.M + Mk + 1)
        scale = np.exp(c_row_log_scale[rows] - L.log_scale_minus[ip])
        R[:, jp] = scale * c[rows, q] * vq / ell
    return RayleighMatrix(pol=pol, entries=R, point=point, M_keep=Mk)


def reflection_matrices(
    profile: GratingProfile,
    point: SpectralPoint,
    match_tol: float = DEFAULT_MATCH_TOL,
    pols: tuple[Polarization, ...] = (Polarization.TM, Polarization.TE),
) -> dict[Polarization, RayleighMatrix]:
    """Full pipeline: QEP solve, matching, boundary solve, reflection matrix.

    The QEP solution and matching are shared between polarizations.
    """
    mats = assemble_matrices(profile, point)
    sol = solve_qep(mats)
    match_eigenvalues(sol, point, match_tol)
    L = l_coefficients(profile, point)
    out = {}
    for pol in pols:
        system = build_boundary_system(pol, sol, mats, L, point)
        c = solve_c_coefficients(system.F, system.b_scaled)
        out[pol] = rayleigh_matrix(pol, c, sol, L, c_row_log_scale=system.b_log_scale)
    return out
