"""Exponential chart phi_x(xi, y, z) = exp_x(-xi N + y T + z Z) around a
normal geodesic, with closed-form Jacobian, complex-logarithm inverse,
boundary graph function h and the tube parametrization Psi.

Conventions: increasing xi moves from the interior base point x toward the
boundary; the chart axis phi(xi, 0, 0) is the unit-speed geodesic from x with
direction angle theta and curvature lam, hitting the boundary at xi = r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ConvergenceFailure,
    MultipleRoots,
    NoRoot,
    OutOfChart,
    ReachExceeded,
)
from .group import (
    GeodesicParams,
    cc_distance,
    cc_geodesic,
    expg_k,
    frame_to_cartesian,
    group_inv,
    group_mul,
    koranyi_norm,
    normalize_angle,
    sinc_k,
)
from .surface import (
    ImplicitDomain,
    SurfacePoint,
    g1_normal,
    horizontal_frame,
    normal_curvature_lambda,
    project_to_surface,
)

__all__ = [
    "GeodesicChart",
    "phi",
    "phi_inverse",
    "phi_jacobian_det",
    "homogeneous_norm",
    "comparability_ratio",
    "boundary_graph_h",
    "h_expansion",
    "tube_point_psi",
    "tube_jacobian",
    "chart_from_boundary",
    "reach_probe",
    "chart_frame_fields",
    "chart_f",
]


@dataclass(frozen=True)
class GeodesicChart:
    """Chart data: interior base point, axis angle, curvature, boundary distance."""

    base: np.ndarray
    theta: float
    lam: float
    r: float = 0.0
    box: tuple = (np.inf, np.inf, np.inf)  # (|xi|, |y|, |z|) certified bounds

    def contains(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=float)
        return (
            (np.abs(c[..., 0]) <= self.box[0])
            & (np.abs(c[..., 1]) <= self.box[1])
            & (np.abs(c[..., 2]) <= self.box[2])
        )


def default_box(r: float, lam: float) -> tuple:
    """Conservative invertibility box around the chart axis."""
    planar = r + 0.5 / max(abs(lam), 1.0)
    if lam != 0.0:
        planar = min(planar, np.pi / (2.0 * abs(lam)))
    return (planar, planar, 0.25)


def _vertical_mix(lam, xi, y):
    """D(lam; xi, y) = (e^{lam y} sinc(lam xi) - expg(2 lam y)) / lam, stable at 0.

    phi's third translated coordinate is xi*D + expg(2 lam y) * z.
    """
    xi = np.asarray(xi, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = np.maximum(np.abs(xi), np.abs(y))
    small = np.abs(lam) * scale < 1e-3
    lam_safe = lam if lam != 0.0 else 1.0
    exact = (
        np.exp(lam * y) * sinc_k(lam * xi) - expg_k(2.0 * lam * y)
    ) / lam_safe
    s2 = xi * xi + y * y
    series = lam * (
        -s2 / 6.0
        - lam * y * s2 / 6.0
        + lam * lam * (xi**4 / 120.0 - xi**2 * y**2 / 12.0 - 11.0 * y**4 / 120.0)
    )
    return np.where(small, series, np.where(np.isfinite(exact), exact, 0.0))


def _phi_translated(chart: GeodesicChart, coords):
    """base^{-1} * phi(coords), vectorized over leading axes of coords."""
    c = np.asarray(coords, dtype=float)
    xi, y, z = c[..., 0], c[..., 1], c[..., 2]
    lam, th = chart.lam, chart.theta
    half = lam * xi / 2.0
    ang = th - lam * xi
    egy = y * expg_k(lam * y)  # (e^{lam y} - 1)/lam
    w1 = -egy * np.sin(ang) + xi * np.cos(th - half) * sinc_k(half)
    w2 = egy * np.cos(ang) + xi * np.sin(th - half) * sinc_k(half)
    w3 = xi * _vertical_mix(lam, xi, y) + expg_k(2.0 * lam * y) * z
    return np.stack([w1, w2, w3], axis=-1)


def phi(chart: GeodesicChart, coords, check: bool = True):
    """Closed-form chart map; coords of shape (..., 3) -> points (..., 3)."""
    c = np.asarray(coords, dtype=float)
    if check and not np.all(chart.contains(c)):
        raise OutOfChart("coordinates outside the certified chart box")
    return group_mul(chart.base, _phi_translated(chart, c))


def phi_inverse(chart: GeodesicChart, q, check: bool = True):
    """Chart coordinates of q via the principal branch of the complex log."""
    q = np.asarray(q, dtype=float)
    w = group_mul(group_inv(chart.base), q)
    lam, th = chart.lam, chart.theta
    W = w[..., 0] + 1j * w[..., 1]
    if lam == 0.0:
        zeta = W * np.exp(-1j * th)
    else:
        arg = 1.0 - 1j * lam * W * np.exp(-1j * th)
        on_cut = (np.real(arg) <= 0.0) & (np.abs(np.imag(arg)) < 1e-14)
        if np.any(on_cut) or np.any(arg == 0.0):
            raise OutOfChart("complex-log argument leaves the principal domain")
        zeta = 1j * np.log(arg) / lam
    xi, y = np.real(zeta), np.imag(zeta)
    z = (w[..., 2] - xi * _vertical_mix(lam, xi, y)) / expg_k(2.0 * lam * y)
    coords = np.stack([xi, y, z], axis=-1)
    if check:
        scale = 1.0 + np.abs(q).max()
        resid = np.abs(phi(chart, coords, check=False) - q).max()
        if resid > 1e-9 * scale:
            raise OutOfChart(f"round-trip residual {resid:.3g} exceeds tolerance")
        if not np.all(chart.contains(coords)):
            raise OutOfChart("preimage outside the certified chart box")
    return coords


def phi_jacobian_det(lam: float, y):
    """det d phi = e^{2 lam y} (e^{2 lam y} - 1)/(2 lam y), limit 1 at lam*y = 0."""
    u = 2.0 * lam * np.asarray(y, dtype=float)
    return np.exp(u) * expg_k(u)


def homogeneous_norm(coords):
    """sqrt(xi^2 + y^2 + |z|), the anisotropic chart norm."""
    c = np.asarray(coords, dtype=float)
    return np.sqrt(c[..., 0] ** 2 + c[..., 1] ** 2 + np.abs(c[..., 2]))


def comparability_ratio(chart: GeodesicChart, coords) -> float:
    """koranyi_norm(base^{-1} * phi(c)) / homogeneous_norm(c); tends to 1 at 0."""
    c = np.asarray(coords, dtype=float)
    h = homogeneous_norm(c)
    if np.any(h == 0.0):
        raise ValueError("comparability ratio undefined at the origin")
    if not np.all(chart.contains(c)):
        raise OutOfChart("coordinates outside the certified chart box")
    return koranyi_norm(_phi_translated(chart, c)) / h


# ---------------------------------------------------------------------------
# Frame extension {N, T, Z} attached to a chart, in cartesian components.


def _ab(chart: GeodesicChart, q):
    q = np.asarray(q, dtype=float)
    a = np.cos(chart.theta) + chart.lam * (q[..., 1] - chart.base[1])
    b = np.sin(chart.theta) - chart.lam * (q[..., 0] - chart.base[0])
    return a, b


def chart_f(chart: GeodesicChart, q):
    """Conformal factor f(q) relating Z = f X3; equals e^{2 lam y} on the chart."""
    a, b = _ab(chart, q)
    return a * a + b * b


def chart_frame_fields(chart: GeodesicChart, q):
    """Extended frame (N, T, Z) at q as cartesian coordinate vectors."""
    q = np.asarray(q, dtype=float)
    a, b = _ab(chart, q)
    N = frame_to_cartesian(q, np.stack([-a, -b, np.zeros_like(a)], axis=-1))
    T = frame_to_cartesian(q, np.stack([-b, a, np.zeros_like(a)], axis=-1))
    f = a * a + b * b
    Z = np.stack([np.zeros_like(f), np.zeros_like(f), f], axis=-1)
    return N, T, Z


# ---------------------------------------------------------------------------
# Charts attached to a boundary point.


def tube_point_psi(dom: ImplicitDomain, sp: SurfacePoint, r: float, validate: bool = True):
    """Point at CC distance r inside the domain whose nearest boundary point is sp.

    Follows the metric normal geodesic: inward direction N(sp), curvature
    2*n3/|n_h| at sp (sign fixed so the reversed path is the minimizing
    geodesic back to the boundary).
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    N, _ = horizontal_frame(sp)
    theta_s = float(np.arctan2(N[1], N[0]))
    lam_s = normal_curvature_lambda(sp)
    g = GeodesicParams(base=np.asarray(sp.p, dtype=float), theta=theta_s, lam=-lam_s)
    x = cc_geodesic(g, r)
    if validate and r > 0:
        d = cc_distance(x, sp.p)
        if abs(d - r) > 1e-6 or dom.F(x) >= 0:
            raise ReachExceeded(
                f"normal geodesic at r={r} failed nearest-point validation "
                f"(cc distance {d:.6g}, F={float(dom.F(x)):.3g})"
            )
    return x


def chart_from_boundary(
    dom: ImplicitDomain, sp: SurfacePoint, r: float, validate: bool = True
) -> GeodesicChart:
    """Chart centered at the interior point x = Psi(sp, r) with axis toward sp."""
    x = tube_point_psi(dom, sp, r, validate=validate)
    N, _ = horizontal_frame(sp)
    theta_s = float(np.arctan2(N[1], N[0]))
    lam_s = normal_curvature_lambda(sp)
    theta = float(normalize_angle(theta_s + lam_s * r + np.pi))
    chart = GeodesicChart(
        base=x, theta=theta, lam=lam_s, r=r, box=default_box(r, lam_s)
    )
    axis_end = phi(chart, np.array([r, 0.0, 0.0]))
    if np.max(np.abs(axis_end - sp.p)) > 1e-8 * (1.0 + np.max(np.abs(sp.p))):
        raise ConvergenceFailure("chart axis does not hit the boundary point")
    return chart


def boundary_graph_h(
    dom: ImplicitDomain, chart: GeodesicChart, y: float, z: float
) -> float:
    """Boundary graph h(y, z): the boundary satisfies xi = r - h(y, z) in the chart."""
    r = chart.r

    def g(xi):
        return float(dom.F(phi(chart, np.array([xi, y, z]), check=False)))

    width = max(0.05 * max(r, 0.1), 2.0 * np.sqrt(y * y + abs(z)))
    for _ in range(8):
        lo, hi = r - width, r + width
        grid = np.linspace(lo, hi, 33)
        vals = np.array([g(x) for x in grid])
        zeros = np.nonzero(vals == 0.0)[0]
        if len(zeros) == 1:
            return r - float(grid[zeros[0]])
        if len(zeros) > 1:
            raise MultipleRoots(
                f"{len(zeros)} exact boundary nodes in the xi-bracket at (y,z)=({y},{z})"
            )
        signs = np.sign(vals)
        crossings = np.nonzero(np.diff(signs) != 0)[0]
        if len(crossings) == 1:
            i = crossings[0]
            xi_star = brentq(g, grid[i], grid[i + 1], xtol=1e-14)
            return r - float(xi_star)
        if len(crossings) > 1:
            raise MultipleRoots(
                f"{len(crossings)} boundary crossings in the xi-bracket at (y,z)=({y},{z})"
            )
        width *= 2.0
    raise NoRoot(f"no boundary crossing near xi={r} for (y,z)=({y},{z})")


def h_expansion(dom: ImplicitDomain, chart: GeodesicChart, step: float = 1e-3):
    """Quadratic data of the boundary graph at the chart axis.

    Returns (half_H, k1, cubic_bound): half_H = h_yy(0,0)/2 with one Richardson
    level, k1 = h_z(0,0), and the observed sup of
    |h - half_H*y^2 - k1*z| / (|y|^3 + |y z|) on a sample grid.
    """

    def h(y, z):
        return boundary_graph_h(dom, chart, y, z)

    def hyy(s):
        return (h(s, 0.0) - 2.0 * h(0.0, 0.0) + h(-s, 0.0)) / (s * s)

    d1, d2 = hyy(step), hyy(step / 2.0)
    half_H = 0.5 * (4.0 * d2 - d1) / 3.0
    zs = step * step  # z scales like a square of a length
    k1 = (h(0.0, zs) - h(0.0, -zs)) / (2.0 * zs)
    bound = 0.0
    for y in (0.02, 0.05, -0.03, -0.06):
        for z in (0.0, 0.001, -0.002):
            resid = abs(h(y, z) - half_H * y * y - k1 * z)
            bound = max(bound, resid / (abs(y) ** 3 + abs(y * z)))
    return float(half_H), float(k1), float(bound)


def _surface_tangent_basis(sp: SurfacePoint):
    """g1-orthonormal basis {T, V} of the boundary tangent plane, frame coefficients."""
    _, T = horizontal_frame(sp)
    V = np.cross(sp.n, T)  # g1 cross product in frame coordinates
    return T, V / np.linalg.norm(V)


def tube_jacobian(dom: ImplicitDomain, sp: SurfacePoint, r: float, step: float = 1e-5) -> float:
    """Jacobian of Psi against sigma0 x dr, by central differences on the surface."""
    T, V = _surface_tangent_basis(sp)
    tol = 1e-14 * dom.diameter()

    def psi_of(point):
        spp = g1_normal(dom, project_to_surface(dom, point, max_iter=20, tol=tol))
        return tube_point_psi(dom, spp, r, validate=False)

    cols = []
    for vec in (T, V):
        v_cart = frame_to_cartesian(sp.p, vec)
        plus = psi_of(sp.p + step * v_cart)
        minus = psi_of(sp.p - step * v_cart)
        cols.append((plus - minus) / (2.0 * step))
    r_lo = max(r - step, 0.0)
    rp = tube_point_psi(dom, sp, r + step, validate=False)
    rm = tube_point_psi(dom, sp, r_lo, validate=False)
    cols.append((rp - rm) / (r + step - r_lo))
    J = abs(float(np.linalg.det(np.stack(cols, axis=-1)))) / sp.nh_norm
    if J <= 0:
        raise ReachExceeded(f"degenerate tube Jacobian at r={r}")
    return J


def reach_probe(dom: ImplicitDomain, quad, n_samples: int = 12, r_max: float | None = None,
                n_grid: int = 16, seed: int = 0) -> float:
    """Empirical reach: largest probed r at which the nearest-point property holds.

    For sampled boundary nodes s and increasing r, checks that Psi(s, r) stays
    inside the domain and that no other quadrature node is closer than r
    (Koranyi pruning before exact CC distances). Reports, never assumes.
    """
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(quad), size=min(n_samples, len(quad)), replace=False)
    if r_max is None:
        r_max = 0.5 * dom.diameter()
    reach = r_max
    K_prune = 4.0  # cc >= koranyi / K on the probed scale
    for i in idx:
        sp = SurfacePoint(quad.points[i], quad.normals[i], float(quad.nh[i]))
        ok_r = 0.0
        for r in np.linspace(r_max / n_grid, r_max, n_grid):
            try:
                x = tube_point_psi(dom, sp, float(r), validate=True)
            except (ReachExceeded, Exception):
                break
            diffs = group_mul(group_inv(x)[None, :], quad.points)
            kor = koranyi_norm(diffs)
            cand = np.nonzero(kor < K_prune * r * 1.02)[0]
            dmin = min(
                (cc_distance(x, quad.points[j]) for j in cand), default=np.inf
            )
            # allow quadrature resolution slack
            if dmin < r - 3.0 * quad.grid_step:
                break
            ok_r = float(r)
        reach = min(reach, ok_r)
    return reach
