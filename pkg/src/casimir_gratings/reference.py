"""Closed-form and semi-analytic oracles: PFA, derivative expansion, and
small-amplitude perturbation theory.

These exist to cross-validate the numerical engine, so their quadratures
are run tighter (node-doubling to 1e-8 relative) than anything they check.

Perturbative reflection coefficients to second order in the profile h
(lambda_m = sqrt(kappa^2 + K_m^2), lambda_mm' = sqrt(kappa^2 + K_m K_m')):

    TM:  R0 = -I
         R1_{mm'} = -2 lambda_m h_{m'-m}
         R2_{mm'} = -2 lambda_m sum_k lambda_k h_{m'-k} h_{k-m}
    TE:  R0 = +I
         R1_{mm'} = +2 (lambda_mm'^2 / lambda_m') h_{m'-m}
         R2_{mm'} = +2 sum_k (lambda_mk^2 lambda_m'k^2 / (lambda_k lambda_m'))
                        h_{m'-k} h_{k-m}

Both sets resum to the exact result -/+ exp(2 lambda h0) for a uniform
height shift, which pins the signs.

The second-order energy of a grating facing a plate is, per polarization,

    E2_p / A = -(1/4 pi^2) sum_j |h_j|^2
               Int_0^inf kappa dkappa Int_-inf^inf dk  F_p,

    F_TM = [lam e^{-2 lam d} / (1 - e^{-2 lam d})] [lam' / (1 - e^{-2 lam' d})]
    F_TE = [e^{-2 lam d} / (1 - e^{-2 lam d})]
           [lam_x^4 / (lam lam' (1 - e^{-2 lam' d}))]

with lam = lam(k), lam' = lam(k + G_j), lam_x^2 = kappa^2 + k (k + G_j).
In polar coordinates and rescaled by 2d this collapses to

    E2_p / A = -(pi^2 / 240 d^5) sum_m |h_m|^2 g_p(4 pi m d / L),

    g_TM(A) = (15/8 pi^4) Int dz z^3 e^{-z}/(1-e^{-z})
              Int_-1^1 dx z'/(1-e^{-z'}),
    g_TE(A) = same outer, inner (z + A x)^2 / (z' (1 - e^{-z'})),

with z' = sqrt(z^2 + A^2 + 2 z A x); both are normalized to g_p(0) = 1 and
grow like A/4 (TM) and A/12 (TE).  The lateral force between two gratings
is, to the same order,

    F_p / A = -(pi^3 / 120 d^5 L) sum_{m>=1} m j_p(2 pi m d / L)
              [Re(h1_m h2_{-m}) sin(2 pi m b / L)
               + Im(h1_m h2_{-m}) cos(2 pi m b / L)],

    j_TM(A) = (60/pi^4) Int dz z^3/sinh z  Int_-1^1 dx z'/sinh z',
    j_TE(A) = (60/pi^4) Int dz z/sinh z    Int dx (z^2 + z A x)^2/(z' sinh z'),

with j_p(0) = 4.  In the d/L -> 0 limit the m = 1 terms reproduce the
lateral PFA b-dependence pi^2 a^2 cos(2 pi b / L) / (120 d^5) exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .profiles import GratingProfile, Polarization, SpectralPoint
from .quadrature import interval_nodes

logger = logging.getLogger(__name__)

ORACLE_REL_TOL = 1e-8

_BETA = {
    Polarization.TM: 2.0 / 3.0,
    Polarization.TE: 2.0 / 3.0 * (1.0 - 30.0 / np.pi**2),
}


def _check_gap(a: float, d: float) -> None:
    if a < 0.0:
        raise DomainError(f"amplitude must be nonnegative, got {a}")
    if a >= d:
        raise DomainError(f"need amplitude < separation, got a={a}, d={d}")


def pfa_energy(a: float, d: float) -> float:
    """Proximity-force energy per area of a sinusoid of amplitude a facing a plate.

    Averages the parallel-plate law over the local gap d + a sin(2 pi x/L):

        E_PFA/A = -(pi^2/720) (2 d^2 + a^2) / (2 (d^2 - a^2)^{5/2}).

    Diverges as the corrugation tips approach the plate (a -> d).
    """
    _check_gap(a, d)
    return -np.pi**2 / 720.0 * (2.0 * d**2 + a**2) / (2.0 * (d**2 - a**2) ** 2.5)


def de_correction(pol: Polarization, a: float, d: float, period: float = 1.0) -> float:
    """First gradient correction to the PFA for one polarization.

    -beta_p pi^4 a^2 / (360 L^2 (d^2 - a^2)^{3/2}), with beta_TM = 2/3 and
    beta_TE = 2/3 (1 - 30/pi^2) < 0.
    """
    _check_gap(a, d)
    return -_BETA[pol] * np.pi**4 / (360.0 * period**2) * a**2 / (d**2 - a**2) ** 1.5


def pfa_normal_force(a: float, d: float) -> float:
    """-d(E_PFA)/dd, evaluated analytically (negative: attractive)."""
    _check_gap(a, d)
    return -np.pi**2 / 480.0 * d * (2.0 * d**2 + 3.0 * a**2) / (d**2 - a**2) ** 3.5


def de_normal_force(pol: Polarization, a: float, d: float, period: float = 1.0) -> float:
    """-d(E_DE@pol)/dd, evaluated analytically."""
    _check_gap(a, d)
    return -_BETA[pol] * np.pi**4 / (120.0 * period**2) * a**2 * d / (d**2 - a**2) ** 2.5


@dataclass(eq=False)
class PerturbativeRayleigh:
    """Reflection matrix expanded to second order in the profile height."""

    pol: Polarization
    order0: np.ndarray
    order1: np.ndarray
    order2: np.ndarray

    def total(self, order: int = 2) -> np.ndarray:
        if order not in (0, 1, 2):
            raise DomainError(f"order must be 0, 1 or 2, got {order}")
        out = self.order0.copy()
        if order >= 1:
            out += self.order1
        if order >= 2:
            out += self.order2
        return out


def perturbative_rayleigh(
    pol: Polarization,
    profile: GratingProfile,
    point: SpectralPoint,
    order: int = 2,
) -> PerturbativeRayleigh:
    """Order-by-order reflection matrices on the full mode range of ``point``.

    Intermediate-mode sums run over the profile's actual harmonic reach,
    which may extend beyond [-M, M]; the needed wavenumbers are computed
    directly, so there is no hidden truncation.
    """
    if profile.period != point.period:
        raise DomainError("profile and spectral point periods differ")
    N = point.N
    lam = point.lambda_tilde
    K = point.K
    kap2 = point.kappa**2

    def lam_of(mm: int) -> float:
        return float(np.hypot(point.kappa, point.kx + 2.0 * np.pi * mm / point.period))

    def K_of(mm: int) -> float:
        return point.kx + 2.0 * np.pi * mm / point.period

    h = profile.coefficient
    supp = profile.harmonics
    sign0 = -1.0 if pol is Polarization.TM else +1.0
    R0 = sign0 * np.eye(N, dtype=complex)
    R1 = np.zeros((N, N), dtype=complex)
    R2 = np.zeros((N, N), dtype=complex)
    for i, m in enumerate(point.modes):
        for jp, mp in enumerate(point.modes):
            h1 = h(mp - m)
            if h1 != 0:
                if pol is Polarization.TM:
                    R1[i, jp] = -2.0 * lam[i] * h1
                else:
                    R1[i, jp] = 2.0 * (kap2 + K[i] * K[jp]) / lam[jp] * h1
            if order < 2:
                continue
            acc = 0j
            for s in supp:
                k = m + s  # intermediate mode with h_{k-m} != 0
                hk = h(mp - k)
                if hk == 0:
                    continue
                if pol is Polarization.TM:
                    acc += lam_of(k) * hk * h(k - m)
                else:
                    acc += (
                        (kap2 + K[i] * K_of(k))
                        * (kap2 + K[jp] * K_of(k))
                        / (lam_of(k) * lam[jp])
                        * hk
                        * h(k - m)
                    )
            if pol is Polarization.TM:
                R2[i, jp] = -2.0 * lam[i] * acc
            else:
                R2[i, jp] = 2.0 * acc
    if order < 1:
        R1[:] = 0
    if order < 2:
        R2[:] = 0
    return PerturbativeRayleigh(pol=pol, order0=R0, order1=R1, order2=R2)


def perturbative_energy_first(h0: float, d: float) -> float:
    """First-order energy shift per area, -pi^2 h0 / (240 d^4).

    Equals the leading Taylor term of the parallel-plate law under
    d -> d - h0; identically zero for zero-mean profiles.
    """
    if not d > 0.0:
        raise DomainError(f"separation d must be positive, got {d}")
    return -np.pi**2 / 240.0 * h0 / d**4


# ---------------------------------------------------------------------------
# node-doubling quadratures for the oracle integrals


def _doubling(evaluate, start: int = 64, cap: int = 1024, rel_tol: float = ORACLE_REL_TOL):
    prev = evaluate(start)
    n = start
    while n < cap:
        n *= 2
        cur = evaluate(n)
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    logger.warning("oracle quadrature not converged to %g at %d nodes", rel_tol, cap)
    return prev


def _one_over_em1(z: np.ndarray) -> np.ndarray:
    """1 / (e^z - 1), overflow-safe."""
    return np.exp(-z) / (-np.expm1(-z))


def _one_over_sinh(z: np.ndarray) -> np.ndarray:
    return 2.0 * np.exp(-z) / (-np.expm1(-2.0 * z))


_Z_CUT = 60.0


def _gj_raw(pol: Polarization, A: float, kind: str, n: int) -> float:
    """Shared evaluator for the g (kind='g') and j (kind='j') integrals.

    The inner x-integral is recast with t = sqrt(z^2 + A^2 + 2 z A x) as
    integration variable, which removes the |z - A| kink and leaves a
    polynomial over (e^t - 1) or sinh t:

        Int dx z'/W(z')          = (1/(z A)) Int dt t^2 / W(t)
        Int dx (z+Ax)^2/(z'W(z')) = (1/(4 z^3 A)) Int dt (t^2+z^2-A^2)^2 / W(t)

    between t = |z - A| and z + A.  The outer integrand has a corner at
    z = A from the |z - A| limit, so the z-range is split there.
    """
    if 0.0 < A < _Z_CUT:
        z1, w1 = interval_nodes(n, 0.0, A)
        z2, w2 = interval_nodes(n, A, _Z_CUT)
        z = np.concatenate([z1, z2])
        wz = np.concatenate([w1, w2])
    else:
        z, wz = interval_nodes(n, 0.0, _Z_CUT)
    if kind == "g":
        inv_w_of = lambda t: 1.0 / (-np.expm1(-t))  # 1 / (1 - e^{-t})
        outer = z**3 * _one_over_em1(z)  # same outer weight for TM and TE
        pref = 15.0 / (8.0 * np.pi**4)
    else:
        inv_w_of = _one_over_sinh
        outer = (z**3 if pol is Polarization.TM else z) * _one_over_sinh(z)
        pref = 60.0 / np.pi**4

    if A == 0.0:
        if kind == "g":
            inner = 2.0 * z / (-np.expm1(-z))
        elif pol is Polarization.TM:
            inner = 2.0 * z * _one_over_sinh(z)
        else:
            inner = 2.0 * z**3 * _one_over_sinh(z)
        return pref * float(np.sum(wz * outer * inner))

    x01, w01 = interval_nodes(n, 0.0, 1.0)
    t0 = np.abs(z - A)
    t1 = z + A
    t = t0[:, None] + (t1 - t0)[:, None] * x01[None, :]
    wt = (t1 - t0)[:, None] * w01[None, :]
    invw = inv_w_of(t)
    if pol is Polarization.TM:
        inner = np.sum(wt * t**2 * invw, axis=1) / (z * A)
    else:
        poly = (t**2 + (z**2 - A**2)[:, None]) ** 2
        inner = np.sum(wt * poly * invw, axis=1)
        inner /= (4.0 * z**3 * A) if kind == "g" else (4.0 * z * A)
    return pref * float(np.sum(wz * outer * inner))


@lru_cache(maxsize=4096)
def _g_raw(pol: Polarization, A: float) -> float:
    return _doubling(lambda n: _gj_raw(pol, A, "g", n))


@lru_cache(maxsize=2)
def _g_zero(pol: Polarization) -> float:
    return _g_raw(pol, 0.0)


def g_function(pol: Polarization, A: float) -> float:
    """Spectral weight of one corrugation harmonic in the second-order energy.

    Calibrated so g_p(0) = 1 exactly; g_TM(A) ~ A/4 and g_TE(A) ~ A/12 for
    large argument.
    """
    if A < 0.0:
        raise DomainError(f"argument must be nonnegative, got {A}")
    return _g_raw(pol, float(A)) / _g_zero(pol)


@lru_cache(maxsize=4096)
def j_function(pol: Polarization, A: float) -> float:
    """Spectral weight of one harmonic in the second-order lateral force.

    j_p(0) = 4 for both polarizations; decays exponentially once the
    corrugation wavelength drops below the separation.
    """
    if A < 0.0:
        raise DomainError(f"argument must be nonnegative, got {A}")
    return _doubling(lambda n: _gj_raw(pol, float(A), "j", n))


def _energy_kernel(pol: Polarization, lam, lamp, lam_x2, d: float):
    occ = _one_over_em1(2.0 * lam * d)  # e^{-2 lam d} / (1 - e^{-2 lam d})
    tail = 1.0 / (-np.expm1(-2.0 * lamp * d))
    if pol is Polarization.TM:
        return lam * occ * lamp * tail
    return occ * lam_x2**2 / (lam * lamp) * tail


def _second_order_integral(pol: Polarization, G: float, d: float, n: int) -> float:
    """Polar-coordinate evaluation of the unfolded second-order integral.

    The angular integral is taken with t = lam(k + G) as variable, the
    same change that makes the compact spectral functions smooth:

        Int dx lam'/(1-e^{-2 lam' d})
            = (1/(lam G)) Int dt t^2/(1-e^{-2 t d}),
        Int dx (lam^2 + lam G x)^2 / (lam lam' (1-e^{-2 lam' d}))
            = (1/(4 lam^2 G)) Int dt (t^2 + lam^2 - G^2)^2 / (1-e^{-2 t d}),

    between |lam - G| and lam + G.  The outer integrand has a corner at
    lam = G, so the radial range is split there.
    """
    cut = 45.0 / (2.0 * d)
    if 0.0 < G < cut:
        l1, w1 = interval_nodes(n, 0.0, G)
        l2, w2 = interval_nodes(n, G, cut)
        lam = np.concatenate([l1, l2])
        wlam = np.concatenate([w1, w2])
    else:
        lam, wlam = interval_nodes(n, 0.0, cut)
    occ = _one_over_em1(2.0 * lam * d) * lam**2  # measure lam^2 * e/(1-e)

    if G == 0.0:
        # TM and TE kernels coincide in the aligned-harmonic limit
        inner = 2.0 * lam / (-np.expm1(-2.0 * lam * d))
        return float(np.sum(wlam * occ * lam * inner))

    x01, w01 = interval_nodes(n, 0.0, 1.0)
    t0 = np.abs(lam - G)
    t1 = lam + G
    t = t0[:, None] + (t1 - t0)[:, None] * x01[None, :]
    wt = (t1 - t0)[:, None] * w01[None, :]
    tail = 1.0 / (-np.expm1(-2.0 * t * d))
    if pol is Polarization.TM:
        inner = np.sum(wt * t**2 * tail, axis=1) / (lam * G)
        return float(np.sum(wlam * occ * lam * inner))
    poly = (t**2 + (lam**2 - G**2)[:, None]) ** 2
    inner = np.sum(wt * poly * tail, axis=1) / (4.0 * lam**2 * G)
    return float(np.sum(wlam * occ * inner))


def perturbative_energy_second(
    profile: GratingProfile, d: float, form: str = "integral"
) -> dict[Polarization, float]:
    """Second-order energy correction per area, split by polarization.

    ``form='integral'`` integrates the unfolded double integral per
    harmonic (the source of truth); ``form='g'`` evaluates the compact
    g-function representation.  The two agree to oracle tolerance and are
    cross-checked in the test suite.
    """
    if not d > 0.0:
        raise DomainError(f"separation d must be positive, got {d}")
    L = profile.period
    out = {}
    for pol in (Polarization.TM, Polarization.TE):
        total = 0.0
        for m in profile.harmonics:
            if m < 0:
                continue  # |h_{-m}| = |h_m|: fold into a factor below
            weight = (1.0 if m == 0 else 2.0) * abs(profile.coefficient(m)) ** 2
            if weight == 0.0:
                continue
            if form == "integral":
                G = 2.0 * np.pi * m / L
                val = _doubling(
                    lambda n, pol=pol, G=G: _second_order_integral(pol, G, d, n),
                    start=64, cap=512,
                )
                total += -weight * val / (4.0 * np.pi**2)
            elif form == "g":
                A = 4.0 * np.pi * m * d / L
                total += -weight * np.pi**2 / (240.0 * d**5) * g_function(pol, A)
            else:
                raise DomainError(f"unknown form {form!r}")
        out[pol] = total
    return out


def perturbative_lateral_force(
    profile1: GratingProfile,
    profile2: GratingProfile,
    d: float,
    b: float,
    term_rtol: float = 1e-12,
) -> dict[Polarization, float]:
    """Second-order lateral force per area between two gratings.

    The harmonic sum is finite forband-limited profiles and is truncated
    once terms drop below ``term_rtol`` of the largest one (j_p decays
    exponentially in the harmonic index).
    """
    if profile1.period != profile2.period:
        raise DomainError("grating periods differ")
    if not d > 0.0:
        raise DomainError(f"separation d must be positive, got {d}")
    L = profile1.period
    ms = sorted(
        m for m in profile1.harmonics
        if m >= 1 and profile2.coefficient(-m) != 0
    )
    out = {}
    for pol in (Polarization.TM, Polarization.TE):
        total, peak = 0.0, 0.0
        for m in ms:
            cross = profile1.coefficient(m) * profile2.coefficient(-m)
            phase = 2.0 * np.pi * m * b / L
            term = (
                m
                * j_function(pol, 2.0 * np.pi * m * d / L)
                * (cross.real * np.sin(phase) + cross.imag * np.cos(phase))
            )
            total += term
            peak = max(peak, abs(term))
            if peak > 0 and abs(term) < term_rtol * peak:
                break
        out[pol] = -np.pi**3 / (120.0 * d**5 * L) * total
    return out


def second_order_logdet_shift(
    profile: GratingProfile,
    point: SpectralPoint,
    d: float,
    half_width: int | None = None,
) -> dict[Polarization, float]:
    """Second-order change of ln det(1 - M) at a single (kappa, kx) node.

    This is the pre-integration summand of the second-order energy for a
    grating facing a plate: the trace index m runs over |m| <= half_width
    and the partner index over the profile's harmonic reach,

        delta_p = -2 sum_{m, m'} |h_{m-m'}|^2 K_p(lambda_m, lambda_m'),

    with the TM and TE kernels of the module docstring.  Used to check the
    engine's integrand against perturbation theory node by node.
    """
    hw = point.M if half_width is None else half_width
    L = profile.period
    out = {}

    def lam_of(mm: int) -> float:
        return float(np.hypot(point.kappa, point.kx + 2.0 * np.pi * mm / L))

    def K_of(mm: int) -> float:
        return point.kx + 2.0 * np.pi * mm / L

    for pol in (Polarization.TM, Polarization.TE):
        acc = 0.0
        for m in range(-hw, hw + 1):
            lam_m = lam_of(m)
            for s in profile.harmonics:
                mp = m + s
                w = abs(profile.coefficient(s)) ** 2
                if w == 0.0:
                    continue
                lam_p = lam_of(mp)
                lam_x2 = point.kappa**2 + K_of(m) * K_of(mp)
                acc += w * float(_energy_kernel(pol, lam_m, lam_p, lam_x2, d))
        out[pol] = -2.0 * acc
    return out
