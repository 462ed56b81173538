"""Cross-module invariant suite behind the validate command.

Each check returns (name, passed, detail); names are dot-prefixed by category
so a substring filter can select groups (e.g. "jacobian", "moments").
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import dblquad, quad

from . import chart as chart_mod
from .chart import (
    GeodesicChart,
    chart_frame_fields,
    default_box,
    phi,
    phi_inverse,
    phi_jacobian_det,
)
from .driver import (
    PathConfig,
    block_max_stats,
    driver_block,
    joint_density_phi,
    sample_driver,
    sample_max_argmax,
)
from .group import (
    GeodesicParams,
    cc_distance,
    cc_geodesic,
    dilate,
    group_inv,
    group_mul,
    koranyi_norm,
)

__all__ = ["run_suite"]


def _random_chart(rng) -> GeodesicChart:
    base = rng.normal(size=3)
    theta = rng.uniform(-np.pi, np.pi)
    lam = rng.uniform(-2.0, 2.0)
    r = rng.uniform(0.05, 0.4)
    return GeodesicChart(base=base, theta=theta, lam=lam, r=r, box=default_box(r, lam))


def _check_group(rng):
    out = []
    p, q, g = rng.normal(size=(3, 20, 3))
    err = np.abs(group_mul(group_mul(p, q), g) - group_mul(p, group_mul(q, g))).max()
    out.append(("group.associativity", err < 1e-12, f"max err {err:.2e}"))
    err = np.abs(group_mul(p, group_inv(p))).max()
    out.append(("group.inverse", err < 1e-12, f"max err {err:.2e}"))
    err = np.abs(koranyi_norm(dilate(p, 1.7)) - 1.7 * koranyi_norm(p)).max()
    out.append(("group.koranyi_homogeneity", err < 1e-10, f"max err {err:.2e}"))
    # left invariance of the CC distance
    errs = []
    for k in range(10):
        a, b, c = rng.normal(size=(3, 3))
        errs.append(abs(cc_distance(group_mul(c, a), group_mul(c, b)) - cc_distance(a, b)))
    err = max(errs)
    out.append(("group.cc_left_invariance", err < 1e-8, f"max err {err:.2e}"))
    # unit-speed geodesics realize the distance
    errs = []
    for k in range(10):
        gp = GeodesicParams(base=rng.normal(size=3), theta=rng.uniform(-3, 3),
                            lam=rng.uniform(-2, 2))
        t = rng.uniform(0.1, 0.8) * min(gp.max_time(), 3.0)
        errs.append(abs(cc_distance(gp.base, cc_geodesic(gp, t)) - t))
    err = max(errs)
    out.append(("group.geodesic_arclength", err < 1e-8, f"max err {err:.2e}"))
    return out


def _check_chart(rng):
    out = []
    errs = []
    for _ in range(20):
        ch = _random_chart(rng)
        c = np.array([
            rng.uniform(-0.8, 0.8) * ch.box[0],
            rng.uniform(-0.8, 0.8) * ch.box[1],
            rng.uniform(-0.8, 0.8) * ch.box[2],
        ])
        errs.append(np.abs(phi_inverse(ch, phi(ch, c)) - c).max())
    err = max(errs)
    out.append(("chart.roundtrip", err < 1e-9, f"max err {err:.2e}"))
    return out


def _check_jacobian(rng):
    out = []
    errs = []
    h = 1e-5
    for _ in range(20):
        ch = _random_chart(rng)
        c = np.array([
            rng.uniform(-0.5, 0.5) * ch.box[0],
            rng.uniform(-0.5, 0.5) * ch.box[1],
            rng.uniform(-0.5, 0.5) * ch.box[2],
        ])
        cols = []
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            cols.append((phi(ch, c + e, check=False) - phi(ch, c - e, check=False)) / (2 * h))
        fd = abs(np.linalg.det(np.stack(cols, axis=-1)))
        cf = phi_jacobian_det(ch.lam, c[1])
        errs.append(abs(fd - cf) / cf)
    err = max(errs)
    out.append(("jacobian.closed_form_vs_fd", err < 1e-6, f"max rel err {err:.2e}"))
    return out


def _check_bracket(rng):
    out = []
    h = 1e-5
    worst = {"NT": 0.0, "NZ": 0.0, "TZ": 0.0}
    for _ in range(20):
        ch = _random_chart(rng)
        q = ch.base + rng.normal(scale=0.1, size=3)

        def fields(p):
            return chart_frame_fields(ch, p)

        def commutator(ia, ib):
            # [V_a, V_b] at q by finite differences of the coordinate flows
            va = fields(q)[ia]
            vb_p = fields(q + h * va)[ib]
            vb_m = fields(q - h * va)[ib]
            d_vb = (vb_p - vb_m) / (2 * h)
            vb = fields(q)[ib]
            va_p = fields(q + h * vb)[ia]
            va_m = fields(q - h * vb)[ia]
            d_va = (va_p - va_m) / (2 * h)
            return d_vb - d_va

        _, _, Z = fields(q)
        lam = ch.lam
        worst["NT"] = max(worst["NT"], np.abs(commutator(0, 1) - (-2.0) * Z).max())
        worst["NZ"] = max(worst["NZ"], np.abs(commutator(0, 2)).max())
        worst["TZ"] = max(worst["TZ"], np.abs(commutator(1, 2) - 2.0 * lam * Z).max())
    out.append(("bracket.NT_eq_m2Z", worst["NT"] < 1e-5, f"max err {worst['NT']:.2e}"))
    out.append(("bracket.NZ_eq_0", worst["NZ"] < 1e-5, f"max err {worst['NZ']:.2e}"))
    out.append(("bracket.TZ_eq_2lamZ", worst["TZ"] < 1e-5, f"max err {worst['TZ']:.2e}"))
    return out


def _check_density(rng):
    out = []
    oks, details = [], []
    for t in (0.25, 1.0, 4.0):
        total, _ = dblquad(
            lambda xi, tau: joint_density_phi(xi, tau, t),
            0.0, t, 0.0, lambda tau: np.inf,
            epsabs=1e-10,
        )
        oks.append(abs(total - 1.0) < 1e-6)
        details.append(f"t={t}: {total:.8f}")
    out.append(("density.normalization", all(oks), "; ".join(details)))
    t = 1.0
    xis = np.linspace(0.05, 3.0, 8)
    errs = []
    for xi in xis:
        marg, _ = quad(lambda tau: joint_density_phi(xi, tau, t), 0.0, t, epsabs=1e-12)
        errs.append(abs(marg - np.sqrt(2.0 / (np.pi * t)) * np.exp(-xi * xi / (2 * t))))
    err = max(errs)
    out.append(("density.xi_marginal_halfnormal", err < 1e-6, f"max err {err:.2e}"))
    return out


def _check_moments(rng, seed):
    out = []
    n = 20000
    for t in (0.25, 1.0):
        times, BN, BT, A = driver_block(t, 512, seed, 0, n, 1)
        xi, tau, bt_tau, a_tau = block_max_stats(times, BN, BT, A)
        m = bt_tau**2
        se = m.std() / np.sqrt(n)
        ok1 = abs(m.mean() - t / 2) < 3 * se
        sa = a_tau.std() / np.sqrt(n)
        ok2 = abs(a_tau.mean()) < 3 * sa
        out.append((f"moments.BT_tau_sq_t{t}", ok1,
                    f"mean {m.mean():.4f} vs {t / 2} (se {se:.4f})"))
        out.append((f"moments.A_tau_zero_t{t}", ok2,
                    f"mean {a_tau.mean():.4f} (se {sa:.4f})"))
    return out


def _check_driver(rng, seed):
    out = []
    cfg = PathConfig(t_final=1.0, n_steps=64, n_substeps=4, seed=seed, path_index=5)
    a = sample_driver(cfg)
    b = sample_driver(cfg)
    ok = (np.array_equal(a.BN, b.BN) and np.array_equal(a.BT, b.BT)
          and np.array_equal(a.A, b.A))
    out.append(("driver.determinism", ok, "bitwise reproducible"))
    n = 20000
    _, BN, BT, A = driver_block(1.0, 64, seed, 0, n, 4)
    v = BN[:, -1].var()
    se = 3 * np.sqrt(2.0 / n)  # var of chi2-based variance estimate
    out.append(("driver.BN_variance", abs(v - 1.0) < se, f"var {v:.4f}"))
    va = A[:, -1].var()
    sa = 3 * A[:, -1].std() ** 2 * np.sqrt(3.0 / n)
    out.append(("driver.area_variance", abs(va - 1.0) < 3 * np.sqrt(8.0 / n),
                f"var {va:.4f}"))
    # exact sampler moments
    g = np.random.Generator(np.random.Philox(key=seed))
    xi, tau = sample_max_argmax(g, 1.0, size=n)
    se_x = (xi**2).std() / np.sqrt(n)
    out.append(("driver.sampler_xi_second_moment",
                abs((xi**2).mean() - 1.0) < 3 * se_x, f"E xi^2 {(xi**2).mean():.4f}"))
    se_t = tau.std() / np.sqrt(n)
    out.append(("driver.sampler_tau_symmetric",
                abs(tau.mean() - 0.5) < 3 * se_t, f"E tau {tau.mean():.4f}"))
    return out


def run_suite(seed: int = 0, filter_name: str | None = None):
    """Run all invariant checks; returns a list of (name, passed, detail)."""
    rng = np.random.default_rng(seed)
    results = []
    results += _check_group(rng)
    results += _check_chart(rng)
    results += _check_jacobian(rng)
    results += _check_bracket(rng)
    results += _check_density(rng)
    results += _check_moments(rng, seed)
    results += _check_driver(rng, seed)
    if filter_name:
        results = [r for r in results if filter_name in r[0]]
    return results
