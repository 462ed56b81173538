"""Closed-form references for validation: planar-disk Dirichlet survival and
heat content (Bessel series, generator half-Laplacian), half-space barrier
probabilities, and the Euclidean disk heat content expansion per unit height.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf, j0, j1, jn_zeros

__all__ = [
    "disk_survival",
    "disk_heat_content",
    "disk_expansion_coefficients",
    "halfspace_survival",
]


def disk_survival(rho: float, R: float, t: float, n_terms: int = 50) -> float:
    """P(planar BM with generator half-Laplacian started at radius rho stays in the disk of radius R up to t)."""
    if not 0 <= rho < R:
        raise ValueError("need 0 <= rho < R")
    z = jn_zeros(0, n_terms)
    terms = 2.0 / (z * j1(z)) * j0(z * rho / R) * np.exp(-(z**2) * t / (2.0 * R * R))
    return float(np.sum(terms))


def disk_heat_content(R: float, t: float, n_terms: int = 50) -> float:
    """Integral of disk_survival over the disk: 4 pi R^2 sum exp(-z_k^2 t / 2R^2)/z_k^2."""
    z = jn_zeros(0, n_terms)
    return float(4.0 * np.pi * R * R * np.sum(np.exp(-(z**2) * t / (2.0 * R * R)) / z**2))


def disk_expansion_coefficients(R: float):
    """(c0, c1, c2) of Q(t) = c0 - c1 sqrt(t) + c2 t for the disk, per unit height."""
    return np.pi * R * R, 2.0 * R * np.sqrt(2.0 * np.pi), np.pi / 2.0


def halfspace_survival(d: float, t: float) -> float:
    """P(max of standard BM over [0,t] < d) = erf(d / sqrt(2 t)), reflection principle."""
    if d <= 0:
        return 0.0
    return float(erf(d / np.sqrt(2.0 * t)))
