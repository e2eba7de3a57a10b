"""Grating profiles, Bloch-mode kinematics and polarization labels.

Conventions used throughout the package (hbar = c = 1):

* a profile of period ``L`` is the real function
  ``h(u) = sum_m h_m exp(i G_m u)`` with ``G_m = 2 pi m / L``,
* a spectral point carries the combined imaginary-frequency wave number
  ``kappa`` and a transverse Bloch vector ``kx`` restricted to the first
  Brillouin zone ``[-pi/L, pi/L]``,
* mode ``m`` of a point has Bloch vector ``K_m = kx + G_m`` and Rayleigh
  wavenumber ``lambda_m = sqrt(kappa^2 + K_m^2)``.

Arrays are indexed by ``m + M`` for ``m`` in ``[-M, M]`` (length ``N = 2M+1``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator

import numpy as np

from .errors import DomainError

#: tolerance for h_{-m} == conj(h_m) relative to the largest coefficient
_REALITY_RTOL = 1e-12


class Polarization(Enum):
    """Scalar polarization: TM sees a Dirichlet wall, TE a Neumann wall."""

    TM = "TM"
    TE = "TE"


@dataclass(frozen=True, eq=False)
class GratingProfile:
    """Real periodic height profile stored as complex Fourier coefficients.

    Parameters
    ----------
    period : float
        Spatial period L > 0.
    coeffs : dict
        Map m -> h_m. Must satisfy h_{-m} = conj(h_m); zero entries are
        dropped. An empty map is a flat surface.
    amplitude : float or None
        Peak height for profiles built by :func:`sinusoid_profile`; kept
        for reporting, not used in any formula.
    """

    period: float
    coeffs: Dict[int, complex] = field(default_factory=dict)
    amplitude: float | None = None

    def __post_init__(self):
        if not self.period > 0.0:
            raise DomainError(f"period must be positive, got {self.period}")
        cleaned = {int(m): complex(c) for m, c in self.coeffs.items() if c != 0}
        scale = max((abs(c) for c in cleaned.values()), default=0.0)
        for m, c in cleaned.items():
            if abs(cleaned.get(-m, 0j) - np.conj(c)) > _REALITY_RTOL * scale:
                raise DomainError(
                    f"coefficients violate reality: h_{-m} != conj(h_{m})"
                )
        object.__setattr__(self, "coeffs", cleaned)

    def __eq__(self, other):
        if not isinstance(other, GratingProfile):
            return NotImplemented
        return self.period == other.period and self.coeffs == other.coeffs

    def coefficient(self, m: int) -> complex:
        return self.coeffs.get(m, 0j)

    @property
    def harmonics(self) -> tuple[int, ...]:
        """Sorted indices of nonzero Fourier coefficients."""
        return tuple(sorted(self.coeffs))

    @property
    def max_harmonic(self) -> int:
        return max((abs(m) for m in self.coeffs), default=0)

    @property
    def is_flat(self) -> bool:
        return not self.coeffs

    @property
    def sinusoid_amplitude(self) -> float | None:
        """Signed amplitude a if the profile is exactly a*sin(2 pi u / L).

        Detected structurally (support {-1, +1}, purely imaginary h_1) so
        that hand-built pure-sine profiles also qualify. None otherwise.
        """
        if self.is_flat:
            return 0.0
        if set(self.coeffs) != {-1, 1}:
            return None
        h1 = self.coeffs[1]
        if abs(h1.real) > _REALITY_RTOL * abs(h1):
            return None
        return -2.0 * h1.imag

    def height(self, u) -> np.ndarray:
        """Evaluate h(u); the reality invariant guarantees a real value."""
        u = np.asarray(u, dtype=float)
        total = np.zeros_like(u, dtype=complex)
        for m, c in self.coeffs.items():
            total += c * np.exp(2j * np.pi * m * u / self.period)
        return total.real

    def height_bounds(self, samples: int = 4096) -> tuple[float, float]:
        """(min h, max h) over one period.

        Exact for flat and pure-sine profiles, dense sampling otherwise.
        """
        a = self.sinusoid_amplitude
        if a is not None:
            return (-abs(a), abs(a))
        u = np.linspace(0.0, self.period, samples, endpoint=False)
        h = self.height(u)
        return (float(h.min()), float(h.max()))


@dataclass(frozen=True, eq=False)
class SpectralPoint:
    """One (kappa, kx) node with its Bloch vectors and Rayleigh wavenumbers.

    ``K[i] = kx + 2 pi (i - M) / period`` and
    ``lambda_tilde[i] = sqrt(kappa^2 + K[i]^2)`` for ``i = 0 .. 2M``.
    """

    kappa: float
    kx: float
    M: int
    period: float = 1.0

    def __post_init__(self):
        if self.kappa < 0.0:
            raise DomainError(f"kappa must be nonnegative, got {self.kappa}")
        if not self.period > 0.0:
            raise DomainError(f"period must be positive, got {self.period}")
        bz = np.pi / self.period
        if abs(self.kx) > bz * (1.0 + 1e-12):
            raise DomainError(f"kx={self.kx} outside first Brillouin zone [-{bz}, {bz}]")
        if self.M < 0 or int(self.M) != self.M:
            raise DomainError(f"M must be a nonnegative integer, got {self.M}")
        modes = np.arange(-self.M, self.M + 1)
        K = self.kx + 2.0 * np.pi * modes / self.period
        lam = np.hypot(self.kappa, K)
        for arr in (modes, K, lam):
            arr.flags.writeable = False
        object.__setattr__(self, "_modes", modes)
        object.__setattr__(self, "_K", K)
        object.__setattr__(self, "_lambda", lam)

    @property
    def N(self) -> int:
        return 2 * self.M + 1

    @property
    def modes(self) -> np.ndarray:
        return self._modes

    @property
    def K(self) -> np.ndarray:
        return self._K

    @property
    def lambda_tilde(self) -> np.ndarray:
        return self._lambda

    def index(self, m: int) -> int:
        """Array index of Fourier mode m."""
        if abs(m) > self.M:
            raise DomainError(f"mode m={m} outside [-{self.M}, {self.M}]")
        return m + self.M


@dataclass(frozen=True)
class ModeWindow:
    """Full mode range M together with the trusted half-width M_keep.

    Downstream reflection matrices are (2*M_keep+1) x (2*M_keep+1).
    """

    M: int
    M_keep: int

    def __post_init__(self):
        if not (0 <= self.M_keep <= self.M):
            raise DomainError(f"need 0 <= M_keep <= M, got M_keep={self.M_keep}, M={self.M}")

    @property
    def size(self) -> int:
        return 2 * self.M_keep + 1

    def slice(self) -> slice:
        """Slice selecting modes |m| <= M_keep out of the full [-M, M] range."""
        return slice(self.M - self.M_keep, self.M + self.M_keep + 1)

    def modes(self) -> Iterator[int]:
        return iter(range(-self.M_keep, self.M_keep + 1))


def sinusoid_profile(a: float, period: float = 1.0) -> GratingProfile:
    """Profile h(u) = a sin(2 pi u / period).

    The only nonzero coefficients are h_{+1} = -i a / 2 and its conjugate
    partner h_{-1} = +i a / 2.
    """
    if a < 0.0:
        raise DomainError(f"amplitude must be nonnegative, got {a}")
    if not period > 0.0:
        raise DomainError(f"period must be positive, got {period}")
    coeffs = {} if a == 0.0 else {1: -0.5j * a, -1: +0.5j * a}
    return GratingProfile(period=period, coeffs=coeffs, amplitude=float(a))


def rayleigh_wavenumbers(point: SpectralPoint) -> np.ndarray:
    """Decay constants sqrt(kappa^2 + K_m^2) for m in [-M, M]."""
    return point.lambda_tilde.copy()


def modified_rayleigh_wavenumber(point: SpectralPoint, m: int, mp: int) -> float:
    """Mixed decay constant sqrt(kappa^2 + K_m K_m').

    Collapses to lambda_m on the diagonal. The radicand can turn negative
    when K_m and K_m' point in opposite directions; that never happens on
    the quadrature domains used here, so it is treated as a domain error
    rather than returning a complex value.
    """
    Km = point.K[point.index(m)]
    Kmp = point.K[point.index(mp)]
    radicand = point.kappa**2 + Km * Kmp
    if radicand < 0.0:
        raise DomainError(
            f"kappa^2 + K_{m} K_{mp} = {radicand:.6g} < 0: no real wavenumber"
        )
    return float(np.sqrt(radicand))
