import csv
import json
import os
import subprocess
import sys

CYL_INI = """\
[domain]
kind = cylinder
R = 1.0
z_period = 1.0

[run]
t_grid = 0.005, 0.01, 0.02, 0.04
n_paths = 1000
n_steps = 64
n_substeps = 4
shell_eps = 0.8
seed = 3
quadrature_level = 1
node_cells = 4
n_r = 6
"""

KB_INI = """\
[domain]
kind = koranyi_ball
r = 1.0
"""


def run_cli(args, env_extra=None, cwd=None):
    env = dict(os.environ)
    env.setdefault("HHEAT_THREADS", "1")
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "hheat.cli", *args],
        capture_output=True, text=True, env=env, cwd=cwd,
    )


def write_cfg(tmp_path, body, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(body)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        plain = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.reader(plain))


def test_geom_cylinder(tmp_path):
    cfg = write_cfg(tmp_path, CYL_INI)
    out = str(tmp_path / "out")
    res = run_cli(["geom", "--config", cfg, "--out", out])
    assert res.returncode == 0, res.stderr
    rows = read_csv(os.path.join(out, "geom.csv"))
    assert rows[0] == ["quantity", "value", "est_error"]
    vals = {r[0]: float(r[1]) for r in rows[1:]}
    assert abs(vals["volume"] - 3.14159265) < 1e-4
    assert abs(vals["sigma0"] - 6.28318531) < 0.02
    assert vals["n_characteristic_nodes"] == 0.0
    assert abs(vals["c2_predicted"] - 1.5708) < 0.01
    assert os.path.exists(os.path.join(out, "geom_manifest.json"))


def test_geom_characteristic_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, KB_INI)
    out = str(tmp_path / "out")
    res = run_cli(["geom", "--config", cfg, "--out", out])
    assert res.returncode == 2
    rows = read_csv(os.path.join(out, "geom.csv"))
    names = [r[0] for r in rows[1:]]
    assert any(n.startswith("char_node_") for n in names)


def test_heat_fit_diag_pipeline(tmp_path):
    cfg = write_cfg(tmp_path, CYL_INI)
    out = str(tmp_path / "out")
    res = run_cli(["heat", "--config", cfg, "--out", out])
    assert res.returncode == 0, res.stderr
    rows = read_csv(os.path.join(out, "heat.csv"))
    assert rows[0] == ["t", "q_hat", "std_err", "shell_eps", "n_paths",
                       "censored_fraction", "wall_time_s"]
    assert len(rows) == 5
    for r in rows[1:]:
        assert float(r[6]) == 0.0  # timing off by default, reproducible output
        assert 0 < float(r[1]) < 3.2
    with open(os.path.join(out, "heat_manifest.json")) as fh:
        man = json.load(fh)
    assert man["seed"] == 3

    res = run_cli(["fit", "--config", cfg, "--out", out])
    assert res.returncode in (0, 2), res.stderr
    rows = read_csv(os.path.join(out, "fit.csv"))
    assert rows[0] == ["coef", "estimate", "std_err", "predicted", "z"]
    assert [r[0] for r in rows[1:]] == ["c0", "c1", "c2"]
    assert abs(float(rows[2][3]) - 5.0133) < 1e-2  # predicted c1 column

    res = run_cli(["diag", "--config", cfg, "--out", out])
    assert res.returncode == 0, res.stderr
    with open(os.path.join(out, "diag.csv")) as fh:
        lines = fh.read().splitlines()
    assert lines[0].split(",") == ["t", "i1", "i2", "i3", "res_tau_T",
                                   "res_T_tau", "se_i1", "se_i2", "se_i3",
                                   "se_r1", "se_r2"]
    trailers = [ln for ln in lines if ln.startswith("#")]
    assert any("slope_res_tau_T" in ln for ln in trailers)
    assert any("slope_res_T_tau" in ln for ln in trailers)


def test_heat_byte_identical_across_threads(tmp_path):
    cfg = write_cfg(tmp_path, CYL_INI)
    out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
    r1 = run_cli(["heat", "--config", cfg, "--out", out1],
                 env_extra={"HHEAT_THREADS": "1"})
    r2 = run_cli(["heat", "--config", cfg, "--out", out2],
                 env_extra={"HHEAT_THREADS": "2"})
    assert r1.returncode == 0 and r2.returncode == 0
    b1 = open(os.path.join(out1, "heat.csv"), "rb").read()
    b2 = open(os.path.join(out2, "heat.csv"), "rb").read()
    assert b1 == b2


def test_fit_missing_column_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, CYL_INI)
    bad = tmp_path / "bad.csv"
    bad.write_text("t,q_hat\n0.01,2.9\n0.02,2.8\n0.04,2.7\n0.08,2.5\n")
    res = run_cli(["fit", "--config", cfg, "--out", str(tmp_path / "o"),
                   "--heat-csv", str(bad)])
    assert res.returncode == 4
    assert "std_err" in res.stderr


def test_fit_missing_file_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, CYL_INI)
    res = run_cli(["fit", "--config", cfg, "--out", str(tmp_path / "o"),
                   "--heat-csv", str(tmp_path / "nope.csv")])
    assert res.returncode == 4


def test_missing_config_exit_code():
    res = run_cli(["heat"])
    assert res.returncode == 4
    assert "config" in res.stderr.lower()


def test_config_validation_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, CYL_INI.replace("n_paths = 1000", "n_paths = 10"))
    res = run_cli(["heat", "--config", cfg, "--out", str(tmp_path / "o")])
    assert res.returncode == 4


def test_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path, CYL_INI)
    out = str(tmp_path / "out")
    res = run_cli(["heat", "--config", cfg, "--out", out,
                   "--tgrid", "0.01,0.02", "--paths", "1000", "--seed", "5"])
    assert res.returncode == 0, res.stderr
    rows = read_csv(os.path.join(out, "heat.csv"))
    assert [r[0] for r in rows[1:]] == ["0.01", "0.02"]
    with open(os.path.join(out, "heat_manifest.json")) as fh:
        assert json.load(fh)["seed"] == 5


def test_validate_command_and_filter():
    res = run_cli(["validate", "--filter", "group"])
    assert res.returncode == 0, res.stdout + res.stderr
    assert "PASS" in res.stdout
    assert "checks passed" in res.stdout
    assert "density" not in res.stdout
