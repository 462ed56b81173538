"""Exit-time survival estimation, shell-stratified heat content assembly,
weighted expansion fitting, and the three-event decomposition diagnostics.

Estimators fan path blocks out across a thread pool; block boundaries and the
reduction order are fixed independently of the worker count, so results are
bit-identical for any HHEAT_THREADS setting.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .chart import GeodesicChart, chart_from_boundary, phi, tube_jacobian, tube_point_psi
from .errors import CharacteristicDomain, IllConditioned, ReachExceeded
from .group import group_mul
from .surface import (
    ImplicitDomain,
    SurfaceQuadrature,
    build_quadrature,
    characteristic_scan,
    horizontal_perimeter,
    total_mean_curvature,
    volume,
)
from . import surface as _surface
from .chart import reach_probe
from .driver import driver_block

__all__ = [
    "MCConfig",
    "SurvivalEstimate",
    "HeatContentEstimate",
    "ExpansionFit",
    "EventDecomposition",
    "ShellRule",
    "build_shell",
    "estimate_survival",
    "survival_curve",
    "estimate_heat_content",
    "heat_content_curve",
    "predicted_coefficients",
    "fit_expansion",
    "decompose_events",
]


def n_workers() -> int:
    raw = os.environ.get("HHEAT_THREADS", "0").strip() or "0"
    n = int(raw)
    return n if n > 0 else (os.cpu_count() or 1)


def _map_blocks(fn, n_paths: int, block_size: int):
    """Apply fn to (start, stop) path blocks; results returned in block order."""
    bounds = [
        (i, min(i + block_size, n_paths)) for i in range(0, n_paths, block_size)
    ]
    with ThreadPoolExecutor(max_workers=n_workers()) as ex:
        return list(ex.map(lambda b: fn(*b), bounds))


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo plan shared by the estimators in this module."""

    n_paths: int = 10_000
    n_steps: int = 256
    n_substeps: int = 8
    seed: int = 0
    block_size: int = 1024
    bridge: bool = True  # Brownian-bridge crossing correction on the distance proxy


@dataclass
class SurvivalEstimate:
    x: np.ndarray
    t: float
    p_hat: float
    std_err: float
    n_paths: int
    censored_fraction: float = 0.0


@dataclass
class HeatContentEstimate:
    t: float
    Q_hat: float
    std_err: float
    shell_eps: float
    interior_volume: float
    n_shell_nodes: int
    n_paths_per_node: int
    censored_fraction: float = 0.0
    interior_bound: float = 0.0  # not-feeling-the-boundary tail, exp(-eps^2/8t)


@dataclass
class ExpansionFit:
    c0: float
    c1: float
    c2: float
    covariance: np.ndarray
    t_grid: list
    residual_norm: float


@dataclass
class EventDecomposition:
    t: float
    I1: float
    I2: float
    I3: float
    residual_tauT: float
    residual_TtauIn: float
    se_I1: float
    se_I2: float
    se_I3: float
    se_r1: float
    se_r2: float
    E_direct: float = 0.0
    se_E: float = 0.0
    censored_fraction: float = 0.0
    coeff_mass: float = 0.0  # total shell quadrature mass behind the integrals
    n_paths: int = 0


# ---------------------------------------------------------------------------
# Survival


def _grid_indices(t_grid, t_max: float, n_steps: int):
    dt = t_max / n_steps
    idx = []
    for t in t_grid:
        k = int(round(t / dt))
        if not (1 <= k <= n_steps) or abs(k * dt - t) > 1e-9 * t_max:
            raise ValueError(
                f"t={t} is not a grid time; pick n_steps so every t is a multiple "
                f"of t_max/n_steps = {dt:.3g}"
            )
        idx.append(k)
    return np.array(idx, dtype=int), dt


def _horizontal_grad_norm(dom: ImplicitDomain, pts):
    g = dom.gradF(pts)
    g1 = g[..., 0] - pts[..., 1] * g[..., 2]
    g2 = g[..., 1] + pts[..., 0] * g[..., 2]
    return np.hypot(g1, g2)


def _survival_weights(dom, base, positions, dt, idx, bridge):
    """Per-path survival weight at each requested grid index.

    positions: driver states (P, n+1, 3) started at the identity; the block is
    left-translated by the base point. With bridge=True the weight is the
    product over steps of one minus the one-dimensional bridge crossing
    probability applied to the signed-distance proxy -F/|grad_H F|; otherwise
    it is the plain all-inside indicator.
    """
    pts = group_mul(base, positions)
    f = np.asarray(dom.F(pts))
    inside = f < 0.0
    alive = np.logical_and.accumulate(inside, axis=1)
    if not bridge:
        return alive[:, idx].astype(float)
    d = np.where(inside, -f / np.maximum(_horizontal_grad_norm(dom, pts), 1e-300), 0.0)
    with np.errstate(under="ignore"):
        q = np.exp(-2.0 * d[:, :-1] * d[:, 1:] / dt)
    # a step with an endpoint outside is a certain crossing
    q = np.where(inside[:, :-1] & inside[:, 1:], q, 1.0)
    w = np.cumprod(1.0 - q, axis=1)
    return w[:, idx - 1]


def survival_curve(dom: ImplicitDomain, x, t_grid, cfg: MCConfig):
    """Survival estimates at each t of a sorted grid, common random numbers."""
    t_grid = [float(t) for t in t_grid]
    t_max = max(t_grid)
    idx, dt = _grid_indices(t_grid, t_max, cfg.n_steps)
    x = np.asarray(x, dtype=float)
    if dom.F(x) >= 0:
        raise ValueError("start point must lie inside the domain")

    def block(p0, p1):
        _, BN, BT, A = driver_block(
            t_max, cfg.n_steps, cfg.seed, p0, p1 - p0, cfg.n_substeps
        )
        pos = np.stack([BN, BT, A], axis=-1)
        w = _survival_weights(dom, x, pos, dt, idx, cfg.bridge)
        return w.sum(axis=0), (w * w).sum(axis=0)

    parts = _map_blocks(block, cfg.n_paths, cfg.block_size)
    s = np.sum([p[0] for p in parts], axis=0)
    s2 = np.sum([p[1] for p in parts], axis=0)
    n = cfg.n_paths
    p_hat = s / n
    var = np.maximum(s2 / n - p_hat**2, 0.0)
    se = np.sqrt(var / n)
    return [
        SurvivalEstimate(x=x, t=t_grid[k], p_hat=float(p_hat[k]),
                         std_err=float(se[k]), n_paths=n)
        for k in range(len(t_grid))
    ]


def estimate_survival(dom: ImplicitDomain, x, t: float, cfg: MCConfig) -> SurvivalEstimate:
    return survival_curve(dom, x, [t], cfg)[0]


# ---------------------------------------------------------------------------
# Shell rule: surface nodes x graded depth quadrature with tube Jacobian


@dataclass
class ShellRule:
    eps: float
    surface: SurfaceQuadrature
    r_nodes: np.ndarray  # (n_r,)
    r_weights: np.ndarray  # (n_r,)
    bases: np.ndarray  # (n_s, n_r, 3) interior quadrature points Psi(s_i, r_j)
    coeffs: np.ndarray  # (n_s, n_r) w_i * g_j * J(s_i, r_j)
    lam: np.ndarray = field(default=None)  # (n_s,) normal geodesic curvatures

    @property
    def shell_volume(self) -> float:
        return float(self.coeffs.sum())


def build_shell(
    dom: ImplicitDomain,
    eps: float,
    node_cells: int = 8,
    n_r: int = 12,
    char_tol: float = _surface.CHAR_TOL,
) -> ShellRule:
    """Quadrature over the depth-eps boundary shell in tube coordinates (s, r).

    Depth uses two Gauss-Legendre panels, [0, eps/4] and [eps/4, eps], because
    the survival deficit concentrates near the boundary at the smallest t while
    still reaching depth ~4*sqrt(t) at the largest.
    """
    quad = build_quadrature(dom, level=0, base_cells=node_cells)
    if len(quad) == 0:
        raise ValueError("empty boundary triangulation for shell construction")
    flagged, _ = characteristic_scan(dom, quad, char_tol)
    if flagged:
        raise CharacteristicDomain(
            f"{len(flagged)} characteristic nodes; shell parametrization undefined"
        )
    v, gw = roots_legendre(max(n_r // 2, 2))
    split = 0.25 * eps
    r_nodes = np.concatenate(
        [split * 0.5 * (v + 1.0), split + (eps - split) * 0.5 * (v + 1.0)]
    )
    r_weights = np.concatenate([split * 0.5 * gw, (eps - split) * 0.5 * gw])
    n_r = len(r_nodes)
    n_s = len(quad)
    bases = np.empty((n_s, n_r, 3))
    coeffs = np.empty((n_s, n_r))
    lam = np.empty(n_s)
    sps = quad.surface_points()
    for i, sp in enumerate(sps):
        lam[i] = 2.0 * sp.n[2] / sp.nh_norm
        for j, r in enumerate(r_nodes):
            bases[i, j] = tube_point_psi(dom, sp, float(r), validate=False)
            if dom.F(bases[i, j]) >= 0:
                raise ReachExceeded(
                    f"shell node at depth {r:.3g} left the domain; reduce eps"
                )
            coeffs[i, j] = quad.weights[i] * quad.nh[i] * r_weights[j] * tube_jacobian(
                dom, sp, float(r)
            )
    return ShellRule(eps=eps, surface=quad, r_nodes=r_nodes, r_weights=r_weights,
                     bases=bases, coeffs=coeffs, lam=lam)


def auto_shell_eps(dom: ImplicitDomain, t_max: float, reach: float | None = None,
                   quad: SurfaceQuadrature | None = None) -> float:
    """Shell depth: at least 4*sqrt(t_max) (tail below ~1e-7 of volume), at
    least a quarter of the probed reach, never more than 0.8 of it."""
    if reach is None:
        if quad is None:
            quad = build_quadrature(dom, level=0, base_cells=8)
        reach = reach_probe(dom, quad, n_samples=6)
    if reach <= 0:
        raise ReachExceeded("probed reach is zero; no tube neighborhood available")
    eps = max(0.25 * reach, 4.0 * np.sqrt(t_max))
    return min(eps, 0.8 * reach)


# ---------------------------------------------------------------------------
# Heat content


def heat_content_curve(
    dom: ImplicitDomain,
    t_grid,
    cfg: MCConfig,
    shell_eps: float | str = "auto",
    node_cells: int = 8,
    n_r: int = 6,
    quad_level: int = 1,
    shell: ShellRule | None = None,
    reach: float | None = None,
):
    """Heat content at each grid t: Q = Vol - sum over shell nodes of the
    weighted survival deficit; the interior never feels the boundary (its
    exponentially small loss is reported as interior_bound, never subtracted).
    """
    t_grid = [float(t) for t in t_grid]
    t_max = max(t_grid)
    idx, dt = _grid_indices(t_grid, t_max, cfg.n_steps)
    if shell is None:
        eps = auto_shell_eps(dom, t_max, reach=reach) if shell_eps == "auto" else float(shell_eps)
        shell = build_shell(dom, eps, node_cells=node_cells, n_r=n_r)
    vol = volume(dom, level=quad_level)
    n_s, n_r_eff = shell.coeffs.shape
    flat_bases = shell.bases.reshape(-1, 3)
    flat_coeffs = shell.coeffs.reshape(-1)

    def block(p0, p1):
        _, BN, BT, A = driver_block(
            t_max, cfg.n_steps, cfg.seed, p0, p1 - p0, cfg.n_substeps
        )
        pos = np.stack([BN, BT, A], axis=-1)
        loss = np.zeros((p1 - p0, len(t_grid)))
        for k in range(len(flat_coeffs)):
            w = _survival_weights(dom, flat_bases[k], pos, dt, idx, cfg.bridge)
            loss += flat_coeffs[k] * (1.0 - w)
        return loss.sum(axis=0), (loss * loss).sum(axis=0)

    parts = _map_blocks(block, cfg.n_paths, cfg.block_size)
    s = np.sum([p[0] for p in parts], axis=0)
    s2 = np.sum([p[1] for p in parts], axis=0)
    n = cfg.n_paths
    mean_loss = s / n
    var = np.maximum(s2 / n - mean_loss**2, 0.0)
    se = np.sqrt(var / n)
    out = []
    for k, t in enumerate(t_grid):
        out.append(
            HeatContentEstimate(
                t=t,
                Q_hat=float(vol - mean_loss[k]),
                std_err=float(se[k]),
                shell_eps=shell.eps,
                interior_volume=float(vol - shell.shell_volume),
                n_shell_nodes=n_s,
                n_paths_per_node=n,
                interior_bound=float(vol * np.exp(-shell.eps**2 / (8.0 * t))),
            )
        )
    return out


def estimate_heat_content(dom, t, shell_eps, cfg: MCConfig, **kw) -> HeatContentEstimate:
    return heat_content_curve(dom, [t], cfg, shell_eps=shell_eps, **kw)[0]


# ---------------------------------------------------------------------------
# Expansion coefficients


def predicted_coefficients(dom: ImplicitDomain, quad: SurfaceQuadrature,
                           quad_level: int = 1):
    """(volume, sqrt(2/pi)*sigma0, total mean curvature / 4)."""
    flagged, min_nh = characteristic_scan(dom, quad)
    if flagged:
        raise CharacteristicDomain(
            f"{len(flagged)} characteristic boundary nodes (min |n_h| = {min_nh:.3g})"
        )
    c0 = volume(dom, level=quad_level)
    c1 = np.sqrt(2.0 / np.pi) * horizontal_perimeter(dom, quad)
    c2 = 0.25 * total_mean_curvature(dom, quad)
    return c0, c1, c2


def fit_expansion(points) -> ExpansionFit:
    """Weighted least squares of Q(t) on the basis {1, sqrt(t), t}.

    The sqrt(t) column enters with a minus sign so c1 estimates the positive
    perimeter coefficient of Q = c0 - c1 sqrt(t) + c2 t.
    """
    if len(points) < 4:
        raise ValueError("need at least 4 heat content points to fit 3 coefficients")
    t = np.array([p.t for p in points], dtype=float)
    q = np.array([p.Q_hat for p in points], dtype=float)
    se = np.array([p.std_err for p in points], dtype=float)
    se = np.maximum(se, 1e-300)
    u = np.sqrt(t)
    X = np.stack([np.ones_like(t), -u, t], axis=-1)
    sw = 1.0 / se
    Xw = X * sw[:, None]
    # center the sqrt(t) column for the conditioning check; centering is an
    # invertible column operation, so it bounds the solve's true conditioning
    Xc = Xw.copy()
    ubar = np.average(u, weights=sw**2)
    Xc[:, 1] = (-(u - ubar)) * sw
    cond = np.linalg.cond(Xc / np.linalg.norm(Xc, axis=0))
    if cond > 1e8:
        raise IllConditioned(f"weighted design condition number {cond:.3g} > 1e8")
    G = Xw.T @ Xw
    beta = np.linalg.solve(G, Xw.T @ (q * sw))
    cov = np.linalg.inv(G)
    resid = (q - X @ beta) * sw
    return ExpansionFit(
        c0=float(beta[0]),
        c1=float(beta[1]),
        c2=float(beta[2]),
        covariance=cov,
        t_grid=list(t),
        residual_norm=float(np.linalg.norm(resid)),
    )


# ---------------------------------------------------------------------------
# Event decomposition diagnostics


def decompose_events(
    dom: ImplicitDomain,
    t_grid,
    cfg: MCConfig,
    shell: ShellRule | None = None,
    shell_eps: float | str = "auto",
    delta: float | None = None,
    node_cells: int = 6,
    n_r: int = 4,
    reach: float | None = None,
):
    """Shell integrals of the three exit events at the argmax time.

    For each shell point x = Psi(s, r) and its chart, with (xi, tau) the max
    and argmax of B^N on [0, t] and the window |B^T_tau|^2 + |A_tau| < delta:
      I1: xi < r in the window.
      I2: xi < r but the truncated process sits outside at tau, in the window.
      I3: xi > r but the truncated process sits inside at tau, in the window.
    Residuals estimate P(tau < T' <= t) and P(T' <= tau <= t, inside at tau).
    Paths leaving the chart box are censored, not clamped.
    """
    t_grid = [float(t) for t in t_grid]
    t_max = max(t_grid)
    idx, dt = _grid_indices(t_grid, t_max, cfg.n_steps)
    if shell is None:
        eps = auto_shell_eps(dom, t_max, reach=reach) if shell_eps == "auto" else float(shell_eps)
        shell = build_shell(dom, eps, node_cells=node_cells, n_r=n_r)
    if delta is None:
        delta = shell.eps
    sps = shell.surface.surface_points()
    charts = []
    for i, sp in enumerate(sps):
        for j, r in enumerate(shell.r_nodes):
            charts.append(
                (chart_from_boundary(dom, sp, float(r), validate=False),
                 float(r), float(shell.coeffs[i, j]))
            )
    m = len(t_grid)
    n_est = 6  # I1, I2, I3, r1, r2, E_direct

    def block(p0, p1):
        times, BNb, BTb, Ab = driver_block(
            t_max, cfg.n_steps, cfg.seed, p0, p1 - p0, cfg.n_substeps
        )
        nb = p1 - p0
        rows = np.arange(nb)
        pos = np.stack([BNb, BTb, Ab], axis=-1)
        # argmax data per t, shared across charts
        arg_k = np.empty((m, nb), dtype=int)
        xi = np.empty((m, nb))
        win = np.empty((m, nb), dtype=bool)
        for a in range(m):
            k = np.argmax(BNb[:, : idx[a] + 1], axis=1)
            arg_k[a] = k
            xi[a] = BNb[rows, k]
            win[a] = BTb[rows, k] ** 2 + np.abs(Ab[rows, k]) < delta
        acc = np.zeros((n_est, m, nb))
        cens = np.zeros((m, nb))
        wsum = 0.0
        for chart, r, c in charts:
            wsum += c
            inside_box = chart.contains(pos)
            fo = np.where(
                inside_box.all(axis=1),
                pos.shape[1],
                np.argmin(inside_box, axis=1),
            )
            xprime = phi(chart, pos, check=False)
            f = np.asarray(dom.F(xprime))
            exited = f >= 0.0
            T_idx = np.where(exited.any(axis=1), np.argmax(exited, axis=1),
                             pos.shape[1])
            for a in range(m):
                ok = fo > idx[a]  # uncensored up to this t
                cens[a] += c * (~ok)
                k = arg_k[a]
                in_at_tau = f[rows, k] < 0.0
                below = xi[a] < r
                w = win[a] & ok
                acc[0, a] += c * (below & w)
                acc[1, a] += c * (below & ~in_at_tau & w)
                acc[2, a] += c * (~below & in_at_tau & w)
                acc[3, a] += c * ((k < T_idx) & (T_idx <= idx[a]) & ok)
                acc[4, a] += c * ((T_idx <= k) & in_at_tau & ok)
                acc[5, a] += c * (in_at_tau & w)
        return acc.sum(axis=2), (acc * acc).sum(axis=2), cens.sum(axis=1), wsum

    parts = _map_blocks(block, cfg.n_paths, cfg.block_size)
    s = np.sum([p[0] for p in parts], axis=0)
    s2 = np.sum([p[1] for p in parts], axis=0)
    cens = np.sum([p[2] for p in parts], axis=0)
    wsum = parts[0][3]
    n = cfg.n_paths
    mean = s / n
    se = np.sqrt(np.maximum(s2 / n - mean**2, 0.0) / n)
    out = []
    for a, t in enumerate(t_grid):
        out.append(
            EventDecomposition(
                t=t,
                I1=float(mean[0, a]), I2=float(mean[1, a]), I3=float(mean[2, a]),
                residual_tauT=float(mean[3, a]), residual_TtauIn=float(mean[4, a]),
                se_I1=float(se[0, a]), se_I2=float(se[1, a]), se_I3=float(se[2, a]),
                se_r1=float(se[3, a]), se_r2=float(se[4, a]),
                E_direct=float(mean[5, a]), se_E=float(se[5, a]),
                censored_fraction=float(cens[a] / (n * max(wsum, 1e-300))),
                coeff_mass=float(wsum), n_paths=n,
            )
        )
    return out
