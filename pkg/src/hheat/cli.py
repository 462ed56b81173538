"""Batch front door: config ingestion, experiment orchestration, CSV emission.

Commands: geom, heat, fit, diag, validate. Configuration is an INI-style file
with [domain] and [run] sections; command-line flags override config values.
Exit codes: 0 success, 2 validation or characteristic failure, 3 numerical
failure, 4 config or schema error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .catalog import make_domain
from .chart import reach_probe
from .errors import (
    CharacteristicDomain,
    ConfigError,
    ConvergenceFailure,
    HHeatError,
    IllConditioned,
)
from .heat import (
    MCConfig,
    decompose_events,
    fit_expansion,
    heat_content_curve,
    predicted_coefficients,
)
from .surface import (
    build_quadrature,
    characteristic_scan,
    horizontal_perimeter,
    total_mean_curvature,
    volume,
)
from .validate import run_suite

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


def _fmt(x) -> str:
    """Fixed numeric formatting: 17 significant digits, locale-free."""
    return format(float(x), ".17g")


@dataclass
class RunConfig:
    domain: dict
    t_grid: list
    n_paths: int = 10_000
    n_steps: int = 128
    n_substeps: int = 8
    shell_eps: str | float = "auto"
    seed: int = 0
    output_dir: str = "hheat_out"
    quadrature_level: int = 1
    node_cells: int = 6
    n_r: int = 12
    block_size: int = 1024
    bridge: bool = True
    timing: bool = False
    raw: dict = field(default_factory=dict)

    def mc(self) -> MCConfig:
        return MCConfig(
            n_paths=self.n_paths,
            n_steps=self.n_steps,
            n_substeps=self.n_substeps,
            seed=self.seed,
            block_size=self.block_size,
            bridge=self.bridge,
        )


def load_config(path: str, overrides: argparse.Namespace) -> RunConfig:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    if "domain" not in cp:
        raise ConfigError("config needs a [domain] section")
    dom_spec = dict(cp["domain"])
    if "bbox" in dom_spec:
        dom_spec["bbox"] = [float(v) for v in dom_spec["bbox"].replace(",", " ").split()]
    run = dict(cp["run"]) if "run" in cp else {}

    def pick(key, cast, default):
        return cast(run[key]) if key in run else default

    t_grid = [float(v) for v in pick("t_grid", str, "0.01,0.02,0.04").replace(",", " ").split()]
    cfg = RunConfig(
        domain=dom_spec,
        t_grid=t_grid,
        n_paths=pick("n_paths", int, 10_000),
        n_steps=pick("n_steps", int, 128),
        n_substeps=pick("n_substeps", int, 8),
        shell_eps=pick("shell_eps", str, "auto"),
        seed=pick("seed", int, 0),
        output_dir=pick("output_dir", str, "hheat_out"),
        quadrature_level=pick("quadrature_level", int, 1),
        node_cells=pick("node_cells", int, 6),
        n_r=pick("n_r", int, 12),
        block_size=pick("block_size", int, 1024),
        bridge=pick("bridge", lambda s: s.lower() not in ("0", "false", "no"), True),
        raw={s: dict(cp[s]) for s in cp.sections()},
    )
    if cfg.shell_eps != "auto":
        cfg.shell_eps = float(cfg.shell_eps)
    if overrides.seed is not None:
        cfg.seed = overrides.seed
    if overrides.out is not None:
        cfg.output_dir = overrides.out
    if overrides.paths is not None:
        cfg.n_paths = overrides.paths
    if overrides.steps is not None:
        cfg.n_steps = overrides.steps
    if overrides.tgrid is not None:
        cfg.t_grid = [float(v) for v in overrides.tgrid.split(",")]
    if getattr(overrides, "timing", False):
        cfg.timing = True
    if sorted(cfg.t_grid) != cfg.t_grid or min(cfg.t_grid) <= 0:
        raise ConfigError("t_grid must be strictly positive and sorted ascending")
    if cfg.n_paths < 1000:
        raise ConfigError("n_paths must be at least 1000 for heat runs")
    return cfg


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _write_manifest(cfg: RunConfig, command: str, wall: float, extra=None):
    os.makedirs(cfg.output_dir, exist_ok=True)
    manifest = {
        "command": command,
        "seed": cfg.seed,
        "config": cfg.raw,
        "overridden": {
            "t_grid": cfg.t_grid,
            "n_paths": cfg.n_paths,
            "n_steps": cfg.n_steps,
            "output_dir": cfg.output_dir,
        },
        "versions": {
            "hheat": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "wall_time_s": wall,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(cfg.output_dir, f"{command}_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def cmd_geom(cfg: RunConfig) -> int:
    t0 = time.monotonic()
    dom = make_domain(cfg.domain)
    quad = build_quadrature(dom, level=cfg.quadrature_level)
    flagged, min_nh = characteristic_scan(dom, quad)
    rows = []
    vol = volume(dom, level=cfg.quadrature_level)
    sigma0 = horizontal_perimeter(dom, quad)
    # refinement-difference error estimates from one coarser level
    quad_c = build_quadrature(dom, level=max(cfg.quadrature_level - 1, 0))
    sigma0_c = horizontal_perimeter(dom, quad_c)
    rows.append(("volume", vol, abs(vol - volume(dom, level=max(cfg.quadrature_level - 1, 0)))))
    rows.append(("sigma0", sigma0, abs(sigma0 - sigma0_c)))
    rows.append(("min_nh", min_nh, 0.0))
    rows.append(("n_characteristic_nodes", float(len(flagged)), 0.0))
    os.makedirs(cfg.output_dir, exist_ok=True)
    code = EXIT_OK
    if flagged:
        # still report what is well defined, then flag the failure
        _write_csv(
            os.path.join(cfg.output_dir, "geom.csv"),
            ["quantity", "value", "est_error"],
            [(q, _fmt(v), _fmt(e)) for q, v, e in rows],
        )
        flag_rows = [(f"char_node_{k}", _fmt(sp.nh_norm), "0")
                     for k, sp in enumerate(flagged[:50])]
        with open(os.path.join(cfg.output_dir, "geom.csv"), "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(flag_rows)
        print(f"geom: characteristic boundary ({len(flagged)} nodes, min |n_h| = {min_nh:.3g})")
        code = EXIT_VALIDATION
    else:
        totH = total_mean_curvature(dom, quad)
        totH_c = total_mean_curvature(dom, quad_c)
        reach = reach_probe(dom, quad_c, n_samples=8)
        c0, c1, c2 = predicted_coefficients(dom, quad, cfg.quadrature_level)
        rows.append(("int_H_dsigma0", totH, abs(totH - totH_c)))
        rows.append(("probed_reach", reach, 0.0))
        rows.append(("c0_predicted", c0, abs(vol - volume(dom, level=max(cfg.quadrature_level - 1, 0)))))
        rows.append(("c1_predicted", c1, np.sqrt(2 / np.pi) * abs(sigma0 - sigma0_c)))
        rows.append(("c2_predicted", c2, 0.25 * abs(totH - totH_c)))
        _write_csv(
            os.path.join(cfg.output_dir, "geom.csv"),
            ["quantity", "value", "est_error"],
            [(q, _fmt(v), _fmt(e)) for q, v, e in rows],
        )
        for q, v, e in rows:
            print(f"{q:24s} {v: .10g}  (est err {e:.2g})")
    _write_manifest(cfg, "geom", time.monotonic() - t0)
    return code


def cmd_heat(cfg: RunConfig) -> int:
    t0 = time.monotonic()
    dom = make_domain(cfg.domain)
    ests = heat_content_curve(
        dom,
        cfg.t_grid,
        cfg.mc(),
        shell_eps=cfg.shell_eps,
        node_cells=cfg.node_cells,
        n_r=cfg.n_r,
        quad_level=cfg.quadrature_level,
    )
    wall = time.monotonic() - t0
    per_row_time = (wall / len(ests)) if cfg.timing else 0.0
    rows = [
        (
            _fmt(e.t), _fmt(e.Q_hat), _fmt(e.std_err), _fmt(e.shell_eps),
            str(e.n_paths_per_node), _fmt(e.censored_fraction), _fmt(per_row_time),
        )
        for e in ests
    ]
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_csv(
        os.path.join(cfg.output_dir, "heat.csv"),
        ["t", "q_hat", "std_err", "shell_eps", "n_paths", "censored_fraction", "wall_time_s"],
        rows,
    )
    _write_manifest(cfg, "heat", wall, {
        "shell_eps": ests[0].shell_eps,
        "n_shell_nodes": ests[0].n_shell_nodes,
        "interior_bound_worst": max(e.interior_bound for e in ests),
    })
    for e in ests:
        print(f"t={e.t:g}: Q={e.Q_hat:.6f} +- {e.std_err:.6f}")
    return EXIT_OK


class _Point:
    def __init__(self, t, Q_hat, std_err):
        self.t, self.Q_hat, self.std_err = t, Q_hat, std_err


def cmd_fit(cfg: RunConfig, heat_csv: str | None) -> int:
    t0 = time.monotonic()
    path = heat_csv or os.path.join(cfg.output_dir, "heat.csv")
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
    except OSError as exc:
        raise ConfigError(f"cannot read heat CSV {path!r}: {exc}") from exc
    for col in ("t", "q_hat", "std_err"):
        if not rows or col not in rows[0]:
            raise ConfigError(f"heat CSV {path!r} is missing column {col!r}")
    points = [_Point(float(r["t"]), float(r["q_hat"]), float(r["std_err"])) for r in rows]
    fit = fit_expansion(points)
    dom = make_domain(cfg.domain)
    quad = build_quadrature(dom, level=cfg.quadrature_level)
    pred = predicted_coefficients(dom, quad, cfg.quadrature_level)
    se = np.sqrt(np.diag(fit.covariance))
    est = (fit.c0, fit.c1, fit.c2)
    zs = [(e - p) / max(s, 1e-300) for e, p, s in zip(est, pred, se)]
    out_rows = [
        (name, _fmt(e), _fmt(s), _fmt(p), _fmt(z))
        for name, e, s, p, z in zip(("c0", "c1", "c2"), est, se, pred, zs)
    ]
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_csv(
        os.path.join(cfg.output_dir, "fit.csv"),
        ["coef", "estimate", "std_err", "predicted", "z"],
        out_rows,
    )
    _write_manifest(cfg, "fit", time.monotonic() - t0,
                    {"residual_norm": fit.residual_norm})
    for name, e, s, p, z in zip(("c0", "c1", "c2"), est, se, pred, zs):
        print(f"{name}: {e:.5f} +- {s:.5f}  predicted {p:.5f}  z={z:+.2f}")
    if any(abs(z) > 4 for z in zs):
        print("fit: regression alarm, |z| > 4")
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_diag(cfg: RunConfig) -> int:
    t0 = time.monotonic()
    dom = make_domain(cfg.domain)
    decs = decompose_events(
        dom,
        cfg.t_grid,
        cfg.mc(),
        shell_eps=cfg.shell_eps,
        node_cells=min(cfg.node_cells, 6),
        n_r=min(cfg.n_r, 4),
    )
    rows = [
        (
            _fmt(d.t), _fmt(d.I1), _fmt(d.I2), _fmt(d.I3),
            _fmt(d.residual_tauT), _fmt(d.residual_TtauIn),
            _fmt(d.se_I1), _fmt(d.se_I2), _fmt(d.se_I3),
            _fmt(d.se_r1), _fmt(d.se_r2),
        )
        for d in decs
    ]
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "diag.csv")
    _write_csv(
        path,
        ["t", "i1", "i2", "i3", "res_tau_T", "res_T_tau",
         "se_i1", "se_i2", "se_i3", "se_r1", "se_r2"],
        rows,
    )

    def slope(vals, ses):
        # floor at the one-path resolution so exact zeros do not distort the fit
        floor = np.maximum(np.array(ses), decs[0].coeff_mass / max(decs[0].n_paths, 1))
        v = np.maximum(np.array(vals), floor)
        t = np.array([d.t for d in decs])
        return float(np.polyfit(np.log(t), np.log(v), 1)[0])

    s1 = slope([d.residual_tauT for d in decs], [d.se_r1 for d in decs])
    s2 = slope([d.residual_TtauIn for d in decs], [d.se_r2 for d in decs])
    with open(path, "a", newline="") as fh:
        fh.write(f"# slope_res_tau_T,{_fmt(s1)}\n")
        fh.write(f"# slope_res_T_tau,{_fmt(s2)}\n")
    _write_manifest(cfg, "diag", time.monotonic() - t0,
                    {"slope_res_tau_T": s1, "slope_res_T_tau": s2})
    for d in decs:
        print(f"t={d.t:g}: I1={d.I1:.5f} I2={d.I2:.5f} I3={d.I3:.5f} "
              f"r1={d.residual_tauT:.5f} r2={d.residual_TtauIn:.5f}")
    print(f"slopes: res_tau_T {s1:.2f}, res_T_tau {s2:.2f}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig | None, filter_name: str | None, seed: int) -> int:
    results = run_suite(seed=seed, filter_name=filter_name)
    width = max((len(r[0]) for r in results), default=10)
    failures = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
        failures += 0 if ok else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_VALIDATION


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hheat",
        description="Heat content asymptotics on the Heisenberg group: "
                    "geometry, Monte Carlo, fitting, diagnostics.",
    )
    parser.add_argument("command", choices=["geom", "heat", "fit", "diag", "validate"])
    parser.add_argument("--config", required=False, help="INI config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--tgrid", default=None, help="comma-separated t values")
    parser.add_argument("--filter", dest="filter_name", default=None,
                        help="substring filter for validate checks")
    parser.add_argument("--heat-csv", default=None,
                        help="input CSV for fit (default: <out>/heat.csv)")
    parser.add_argument("--timing", action="store_true",
                        help="emit measured wall_time_s in CSV instead of 0.0 "
                             "(breaks byte-identical reproducibility)")
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(None, args.filter_name, args.seed or 0)
        if not args.config:
            raise ConfigError(f"{args.command} requires --config")
        cfg = load_config(args.config, args)
        if args.command == "geom":
            return cmd_geom(cfg)
        if args.command == "heat":
            return cmd_heat(cfg)
        if args.command == "fit":
            return cmd_fit(cfg, args.heat_csv)
        if args.command == "diag":
            return cmd_diag(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CharacteristicDomain as exc:
        print(f"characteristic domain: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IllConditioned, ConvergenceFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HHeatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
