"""Heisenberg group algebra, left-invariant frame, homogeneous norms and CC geodesics.

The group is modelled as R^3 with product
    (x1,x2,x3)*(y1,y2,y3) = (x1+y1, x2+y2, x3+y3 + x1*y2 - x2*y1).
Points are plain numpy arrays of shape (..., 3); every operation is
vectorized over leading axes and pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceFailure, ParameterOutOfRange

__all__ = [
    "GeodesicParams",
    "group_mul",
    "group_inv",
    "frame_at",
    "frame_coeffs",
    "frame_to_cartesian",
    "koranyi_norm",
    "cc_geodesic",
    "cc_distance",
    "dilate",
    "normalize_angle",
]


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite coordinates are not admitted")


def group_mul(p, q):
    """Group product p*q, vectorized over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _check_finite(p, q)
    out = np.empty(np.broadcast_shapes(p.shape, q.shape), dtype=float)
    out[..., 0] = p[..., 0] + q[..., 0]
    out[..., 1] = p[..., 1] + q[..., 1]
    out[..., 2] = (
        p[..., 2] + q[..., 2] + p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0]
    )
    return out


def group_inv(p):
    """Group inverse; coordinatewise negation since x1*y2 - x2*y1 is antisymmetric."""
    p = np.asarray(p, dtype=float)
    _check_finite(p)
    return -p


def frame_at(p):
    """Left-invariant frame (X1, X2, X3) at p as cartesian coordinate vectors."""
    p = np.asarray(p, dtype=float)
    _check_finite(p)
    shape = p.shape[:-1]
    X1 = np.zeros(shape + (3,))
    X2 = np.zeros(shape + (3,))
    X3 = np.zeros(shape + (3,))
    X1[..., 0] = 1.0
    X1[..., 2] = -p[..., 1]
    X2[..., 1] = 1.0
    X2[..., 2] = p[..., 0]
    X3[..., 2] = 1.0
    return X1, X2, X3


def frame_coeffs(p, v):
    """Coefficients (a,b,c) of the cartesian tangent vector v at p in the frame X1,X2,X3."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.array(v, copy=True)
    out[..., 2] = v[..., 2] + p[..., 1] * v[..., 0] - p[..., 0] * v[..., 1]
    return out


def frame_to_cartesian(p, coeffs):
    """Cartesian components of a*X1 + b*X2 + c*X3 at p."""
    p = np.asarray(p, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    out = np.array(c, copy=True)
    out[..., 2] = c[..., 2] - p[..., 1] * c[..., 0] + p[..., 0] * c[..., 1]
    return out


def koranyi_norm(p):
    """Homogeneous Koranyi norm ((x1^2+x2^2)^2 + 4*x3^2)^(1/4)."""
    p = np.asarray(p, dtype=float)
    _check_finite(p)
    r2 = p[..., 0] ** 2 + p[..., 1] ** 2
    return (r2**2 + 4.0 * p[..., 2] ** 2) ** 0.25


def dilate(p, r):
    """Parabolic dilation delta_r(x1,x2,x3) = (r x1, r x2, r^2 x3)."""
    p = np.asarray(p, dtype=float)
    out = np.array(p, copy=True)
    out[..., 0] *= r
    out[..., 1] *= r
    out[..., 2] *= r * r
    return out


def normalize_angle(theta):
    """Map an angle to (-pi, pi]."""
    t = np.remainder(theta + np.pi, 2.0 * np.pi) - np.pi
    return np.where(t == -np.pi, np.pi, t)


# Small-argument-stable scalar kernels. Each has a removable singularity at 0
# filled by a Taylor series below the cutoff; the series error there is below
# machine epsilon.
_CUT = 1e-4


def sinc_k(u):
    """sin(u)/u."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _CUT
    us = np.where(small, 0.0, u)
    out = np.where(small, 1.0 - u * u / 6.0, np.sin(us) / np.where(small, 1.0, us))
    return out


def versine_k(u):
    """(1 - cos(u))/u."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _CUT
    us = np.where(small, 1.0, u)
    out = np.where(small, u / 2.0 - u**3 / 24.0, (1.0 - np.cos(u)) / us)
    return out


def expg_k(u):
    """(exp(u) - 1)/u."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _CUT
    us = np.where(small, 1.0, u)
    out = np.where(small, 1.0 + u / 2.0 + u * u / 6.0, np.expm1(u) / us)
    return out


def usin_k(u):
    """(u - sin(u))/u^2."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _CUT
    us = np.where(small, 1.0, u)
    out = np.where(small, u / 6.0 - u**3 / 120.0, (u - np.sin(u)) / us**2)
    return out


@dataclass(frozen=True)
class GeodesicParams:
    """Maximal CC geodesic: base point, initial direction angle, signed curvature."""

    base: np.ndarray
    theta: float
    lam: float

    def max_time(self) -> float:
        return np.inf if self.lam == 0.0 else 2.0 * np.pi / abs(self.lam)


def cc_geodesic(g: GeodesicParams, t):
    """Point at arclength t on the unit-speed geodesic g.

    The planar projection is a circle of radius 1/|lam| (a line for lam=0);
    the vertical coordinate carries the swept stochastic-area term.
    """
    t = np.asarray(t, dtype=float)
    lam = float(g.lam)
    if lam != 0.0 and np.any(np.abs(lam * t) >= 2.0 * np.pi):
        raise ParameterOutOfRange(
            f"|t| must be below 2*pi/|lambda| = {2.0 * np.pi / abs(lam):.6g}"
        )
    u = lam * t
    S = t * sinc_k(u)  # sin(lam t)/lam
    V = t * versine_k(u)  # (1 - cos(lam t))/lam
    W = t * t * usin_k(u)  # (lam t - sin(lam t))/lam^2
    ct, st = np.cos(g.theta), np.sin(g.theta)
    w = np.stack([ct * S + st * V, -ct * V + st * S, -W], axis=-1)
    return group_mul(g.base, w)


def cc_geodesic_velocity(g: GeodesicParams, t):
    """Velocity at time t in frame coefficients: cos(theta-lam t) X1 + sin(theta-lam t) X2."""
    a = g.theta - g.lam * np.asarray(t, dtype=float)
    return np.stack([np.cos(a), np.sin(a), np.zeros_like(a)], axis=-1)


def _mu(u):
    # (2u - sin 2u) / (4 sin^2 u): odd, strictly increasing on (-pi, pi),
    # mu(u) ~ u/3 near 0 and mu -> +/-inf at +/-pi.
    if abs(u) < 1e-5:
        return u / 3.0 + u**3 * (2.0 / 45.0)
    return (2.0 * u - np.sin(2.0 * u)) / (4.0 * np.sin(u) ** 2)


def cc_distance(p, q) -> float:
    """Carnot-Caratheodory distance, by geodesic shooting on w = p^{-1}*q.

    The vertical-gap matching equation reduces to one monotone scalar equation
    mu(u) = |w3|/rho^2 in the half-arc angle u = lam*t/2; purely vertical
    targets use the closed form sqrt(2*pi*|w3|).
    """
    w = group_mul(group_inv(np.asarray(p, dtype=float)), np.asarray(q, dtype=float))
    rho2 = float(w[0] ** 2 + w[1] ** 2)
    w3 = float(w[2])
    if rho2 < 1e-14:
        return float(np.sqrt(2.0 * np.pi * abs(w3)))
    rho = np.sqrt(rho2)
    m = abs(w3) / rho2
    if m < 1e-12:
        return rho
    # bracket [0, pi): expand toward pi until mu exceeds the target
    hi = np.pi - 1e-3
    for _ in range(8):
        if _mu(hi) >= m:
            break
        hi = np.pi - (np.pi - hi) * 0.125
    else:
        raise ConvergenceFailure("mu bracket ladder exhausted (target too steep)")
    try:
        u = brentq(lambda v: _mu(v) - m, 1e-300, hi, xtol=1e-15, rtol=8.9e-16)
    except ValueError as exc:  # pragma: no cover - signals a bug, not user error
        raise ConvergenceFailure(f"root bracketing failed: {exc}") from exc
    return float(rho * u / np.sin(u)) if u > 1e-8 else float(rho)
