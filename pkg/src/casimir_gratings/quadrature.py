"""Gauss-Legendre node helpers shared by the engine and the analytic oracles."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def interval_nodes(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = _leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def radial_nodes(n: int, d: float, cutoff_scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes for Integral_0^inf f(kappa) kappa dkappa with an exp(-2 kappa d) envelope.

    The half line is truncated at kappa_max = cutoff_scale / (2 d), where
    the envelope has decayed to exp(-cutoff_scale) (~2e-9 at the default
    scale), and integrated with a plain Gauss-Legendre rule; the envelope
    is entire, so the rule converges spectrally.  Returned weights absorb
    the kappa dkappa measure: the integral is sum(w * f(kappa)).
    """
    kappa, w = interval_nodes(n, 0.0, cutoff_scale / (2.0 * d))
    return kappa, w * kappa
