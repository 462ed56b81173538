"""Stochastic drivers: Brownian pairs, Levy area, running max statistics.

Run as: python demos/driver_statistics.py
"""

import numpy as np
from scipy.stats import kstest

from hheat.driver import (
    block_max_stats,
    driver_block,
    exact_group_bm,
    joint_density_phi,
    sample_driver,
    sample_max_argmax,
    PathConfig,
)

# ---------------------------------------------------------------------------
# Drivers are keyed by (seed, path_index): the same pair always reproduces the
# same path, independent of how paths are grouped into blocks.

cfg = PathConfig(t_final=1.0, n_steps=256, n_substeps=4, seed=7, path_index=12)
path = sample_driver(cfg)
print("driver path: B^N(1) = %.4f, B^T(1) = %.4f, A(1) = %.4f"
      % (path.BN[-1], path.BT[-1], path.A[-1]))
_, BN, _, A = driver_block(1.0, 256, 7, 10, 5, 4)
print("same path from a block:", np.array_equal(BN[2], path.BN))

# ---------------------------------------------------------------------------
# The exact group Brownian motion is the driver left-translated by the start
# point; its planar projection is an ordinary planar Brownian motion.

x = np.array([0.4, -0.2, 0.1])
traj = exact_group_bm(x, path)
print("planar projection exact:",
      np.allclose(traj[:, 0], x[0] + path.BN),
      np.allclose(traj[:, 1], x[1] + path.BT))

# ---------------------------------------------------------------------------
# Running max and argmax of B^N: the argmax follows the arcsine law and the
# max is half-normal; the joint density has the closed form
# Phi(xi, tau; t) = xi exp(-xi^2 / 2 tau) / (pi tau^{3/2} sqrt(t - tau)).

n = 40_000
times, BN, BT, A = driver_block(1.0, 2048, 11, 0, n, 1)
xi, tau, bt_tau, a_tau = block_max_stats(times, BN, BT, A)

arcsine = lambda v: 2 / np.pi * np.arcsin(np.sqrt(np.clip(v, 0, 1)))
print("\nKS argmax vs arcsine:   %.4f" % kstest(tau, arcsine).statistic)
print("E[(B^T at tau)^2] = %.4f (identity: t/2 = 0.5)" % np.mean(bt_tau**2))
print("E[A at tau]       = %+.4f (identity: 0)" % np.mean(a_tau))
print("density at (1, 0.5; 1): %.5f (closed form 4 e^{-1}/pi = %.5f)"
      % (joint_density_phi(1.0, 0.5, 1.0), 4 * np.exp(-1) / np.pi))

# the exact sampler draws (max, argmax) directly from the joint law
rng = np.random.default_rng(2)
xi_s, tau_s = sample_max_argmax(rng, 1.0, size=n)
print("exact sampler KS argmax: %.4f" % kstest(tau_s, arcsine).statistic)
print("exact sampler E[xi^2]  = %.4f (identity: t = 1)" % np.mean(xi_s**2))
