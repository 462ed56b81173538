"""Stochastic drivers: planar Brownian increments at substep resolution, the
Levy area accumulated by midpoint sums, running max/argmax statistics, the
exact group-level horizontal Brownian motion, and the truncated frame process
realized through a geodesic chart.

Streams are counter-based (Philox) and keyed by (seed, path_index) only, so a
path is a pure function of its key, independent of scheduling or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import GeodesicChart, chart_frame_fields, phi
from .group import group_mul

__all__ = [
    "PathConfig",
    "DriverPath",
    "MaxStats",
    "sample_driver",
    "driver_block",
    "max_stats",
    "block_max_stats",
    "joint_density_phi",
    "sample_max_argmax",
    "exact_group_bm",
    "truncated_frame_process",
    "integrate_frame_sde",
]

_M64 = (1 << 64) - 1


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based stream, a pure function of (seed, path_index)."""
    key = ((int(seed) & _M64) << 64) | (int(path_index) & _M64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class PathConfig:
    """One path's sampling plan; step = t_final/n_steps, refined by n_substeps."""

    t_final: float
    n_steps: int
    n_substeps: int = 8
    seed: int = 0
    path_index: int = 0

    def __post_init__(self):
        if self.t_final <= 0 or self.n_steps < 1 or self.n_substeps < 1:
            raise ValueError("t_final > 0 and positive step counts required")


@dataclass
class DriverPath:
    """Step-resolution states of (B^N, B^T, A) with A(0) = BN(0) = BT(0) = 0."""

    times: np.ndarray
    BN: np.ndarray
    BT: np.ndarray
    A: np.ndarray


def _simulate(rng, t_final, n_steps, n_substeps):
    """Fine-grid increments; returns step-resolution (BN, BT, A)."""
    n_fine = n_steps * n_substeps
    dt_fine = t_final / n_fine
    dB = rng.standard_normal((n_fine, 2)) * np.sqrt(dt_fine)
    B = np.zeros((n_fine + 1, 2))
    np.cumsum(dB, axis=0, out=B[1:])
    # midpoint (Stratonovich) area sums reduce to left-point sums here because
    # the symmetric half-increment corrections cancel pairwise
    a_inc = B[:-1, 0] * dB[:, 1] - B[:-1, 1] * dB[:, 0]
    A = np.zeros(n_fine + 1)
    np.cumsum(a_inc, out=A[1:])
    return B[::n_substeps, 0], B[::n_substeps, 1], A[::n_substeps]


def sample_driver(cfg: PathConfig) -> DriverPath:
    rng = path_rng(cfg.seed, cfg.path_index)
    BN, BT, A = _simulate(rng, cfg.t_final, cfg.n_steps, cfg.n_substeps)
    times = np.linspace(0.0, cfg.t_final, cfg.n_steps + 1)
    return DriverPath(times=times, BN=BN, BT=BT, A=A)


def driver_block(t_final, n_steps, seed, start_index, n_paths, n_substeps=8):
    """(BN, BT, A) arrays of shape (n_paths, n_steps+1) for a contiguous index block.

    Row k reproduces sample_driver with path_index = start_index + k bit for bit.
    """
    BN = np.empty((n_paths, n_steps + 1))
    BT = np.empty((n_paths, n_steps + 1))
    A = np.empty((n_paths, n_steps + 1))
    for k in range(n_paths):
        rng = path_rng(seed, start_index + k)
        BN[k], BT[k], A[k] = _simulate(rng, t_final, n_steps, n_substeps)
    times = np.linspace(0.0, t_final, n_steps + 1)
    return times, BN, BT, A


@dataclass
class MaxStats:
    """Running max of B^N on [0, t], its (grid-exact) argmax and companions there."""

    xi: float
    tau: float
    BT_at_tau: float
    A_at_tau: float


def max_stats(path: DriverPath, t: float | None = None) -> MaxStats:
    idx = len(path.times) - 1
    if t is not None:
        idx = int(np.searchsorted(path.times, t * (1 + 1e-12), side="right")) - 1
    k = int(np.argmax(path.BN[: idx + 1]))
    return MaxStats(
        xi=float(path.BN[k]),
        tau=float(path.times[k]),
        BT_at_tau=float(path.BT[k]),
        A_at_tau=float(path.A[k]),
    )


def block_max_stats(times, BN, BT, A, t: float | None = None):
    """Vectorized max/argmax over a block; returns (xi, tau, BT_tau, A_tau) arrays."""
    idx = len(times) - 1
    if t is not None:
        idx = int(np.searchsorted(times, t * (1 + 1e-12), side="right")) - 1
    k = np.argmax(BN[:, : idx + 1], axis=1)
    rows = np.arange(BN.shape[0])
    return BN[rows, k], times[k], BT[rows, k], A[rows, k]


def joint_density_phi(xi, tau, t: float):
    """Joint density of (max, argmax) of Brownian motion on [0, t]."""
    if t <= 0:
        raise ValueError("t must be positive")
    xi = np.asarray(xi, dtype=float)
    tau = np.asarray(tau, dtype=float)
    inside = (xi >= 0) & (tau > 0) & (tau < t)
    ts = np.where(inside, tau, 0.5 * t)
    dens = (
        xi * np.exp(-(xi**2) / (2.0 * ts))
        / (np.pi * ts**1.5 * np.sqrt(t - ts))
    )
    return np.where(inside, dens, 0.0)


def sample_max_argmax(rng: np.random.Generator, t: float, size=None):
    """Exact joint draw: arcsine argmax, then Rayleigh(sqrt(tau)) max given tau."""
    if t <= 0:
        raise ValueError("t must be positive")
    u = rng.random(size)
    tau = t * np.sin(0.5 * np.pi * u) ** 2
    xi = rng.rayleigh(np.sqrt(tau))
    return xi, tau


def exact_group_bm(x, path: DriverPath):
    """Group-level horizontal Brownian motion: x * (B^N, B^T, A) at grid times."""
    drv = np.stack([path.BN, path.BT, path.A], axis=-1)
    return group_mul(np.asarray(x, dtype=float), drv)


def truncated_frame_process(chart: GeodesicChart, path: DriverPath):
    """Chart realization exp_x(-B^N N + B^T T + A Z) of the driver.

    Returns (positions, first_out): positions at all grid times (computed
    unconditionally) and the first grid index at which the driver leaves the
    certified chart box, or n_steps+1 if it never does. Callers must censor,
    not clamp, from first_out onward.
    """
    coords = np.stack([path.BN, path.BT, path.A], axis=-1)
    inside = chart.contains(coords)
    out_idx = np.nonzero(~inside)[0]
    first_out = int(out_idx[0]) if len(out_idx) else len(path.times)
    return phi(chart, coords, check=False), first_out


def integrate_frame_sde(chart: GeodesicChart, path: DriverPath):
    """Reference integration of dx = -N(x) dB^N + T(x) dB^T (Stratonovich).

    Heun predictor-corrector plus the commutator area term Z(x) * a_n, where
    a_n is the step's Levy area about its own start, recovered from the
    driver's accumulated area. Strong first order; used as the exact-process
    stand-in when comparing against the truncated frame process.
    """
    n = len(path.times) - 1
    out = np.empty((n + 1, 3))
    c = np.array(chart.base, dtype=float)
    out[0] = c
    dBN = np.diff(path.BN)
    dBT = np.diff(path.BT)
    dA = np.diff(path.A)
    a_ctr = dA - (path.BN[:-1] * dBT - path.BT[:-1] * dBN)

    def drift(p, k):
        N, T, _ = chart_frame_fields(chart, p)
        return -N * dBN[k] + T * dBT[k]

    for k in range(n):
        v0 = drift(c, k)
        pred = c + v0
        v1 = drift(pred, k)
        _, _, Z = chart_frame_fields(chart, c)
        c = c + 0.5 * (v0 + v1) + Z * a_ctr[k]
        out[k + 1] = c
    return out
