import json
import os

import numpy as np
import pytest

from kohnlab import cli
from kohnlab import spectral as sx
from kohnlab import harness as hx


CFG = """\
[surface]
degrees = [2, 4]

[grid]
N = 32
k_max = 16

[tau]
T = 2.0
n = 4

[samples]
n_samples = 120
n_q = 500
seed = 0

[tolerances]
exponent = 0.1
"""


@pytest.fixture()
def cfg(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text(CFG)
    return str(p)


def test_verify_symbolic(cfg, tmp_path):
    out = tmp_path / "rep"
    rc = cli.main(["verify", "symbolic", "--surface", cfg,
                   "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["all_passed"] is True
    assert summary["suites"]["symbolic"]["config_hash"]
    assert (out / "symbolic.csv").exists()
    idents = json.loads((out / "symbolic.json").read_text())
    assert all(e["status"] == "PASS" and e["witness"] == "" for e in idents)


def test_verify_geometry(cfg, tmp_path):
    rc = cli.main(["verify", "geometry", "--surface", cfg,
                   "--out", str(tmp_path / "g"), "--seed", "3"])
    assert rc == 0


def test_verify_seed_changes_hash(cfg, tmp_path):
    for seed in ("1", "2"):
        cli.main(["verify", "symbolic", "--surface", cfg,
                  "--out", str(tmp_path / seed), "--seed", seed])
    h1 = json.loads((tmp_path / "1" / "summary.json").read_text())
    h2 = json.loads((tmp_path / "2" / "summary.json").read_text())
    assert (h1["suites"]["symbolic"]["config_hash"]
            != h2["suites"]["symbolic"]["config_hash"])


def test_missing_config_is_exit_2(tmp_path):
    rc = cli.main(["verify", "symbolic", "--surface",
                   str(tmp_path / "nope.toml"), "--out", str(tmp_path)])
    assert rc == 2


def test_unknown_section_is_exit_2(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[mystery]\nx = 1\n")
    rc = cli.main(["verify", "symbolic", "--surface", str(p),
                   "--out", str(tmp_path)])
    assert rc == 2


def test_bad_degrees_is_exit_2(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[surface]\ndegrees = [3]\n")
    rc = cli.main(["verify", "symbolic", "--surface", str(p),
                   "--out", str(tmp_path)])
    assert rc == 2


def test_geometry_mu_csv(cfg, capsys):
    rc = cli.main(["geometry", "--surface", cfg, "--op", "mu",
                   "--factor", "2", "--p", "0.3,0.1",
                   "--delta", "0.1", "--delta", "0.5"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "j,p_re,p_im,delta,value"
    assert len(lines) == 3
    v1, v2 = (float(l.split(",")[-1]) for l in lines[1:])
    assert 0 < v1 < v2                     # mu increases with delta


def test_geometry_distance_csv(cfg, capsys):
    rc = cli.main(["geometry", "--surface", cfg, "--op", "dS",
                   "--p", "0,0,0,0,0", "--q", "0.3,0,0.2,0,0.1"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].endswith("value")
    assert float(lines[1].split(",")[-1]) > 0


def test_geometry_bad_point_is_exit_2(cfg):
    rc = cli.main(["geometry", "--surface", cfg, "--op", "dS",
                   "--p", "0,0", "--q", "1,1"])
    assert rc == 2


def test_surface_eig_stdout(cfg, capsys):
    rc = cli.main(["surface", "eig", "--surface", cfg, "--factor", "1",
                   "--tau", "1.0", "--grid", "32,2.5", "--k-max", "12"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "k,eigenvalue"
    lams = [float(l.split(",")[1]) for l in lines[1:]]
    assert lams == sorted(lams)
    assert lams[0] < 1e-8                  # Landau bottom level


def test_surface_eig_cache(cfg, tmp_path):
    out = tmp_path / "eig"
    rc = cli.main(["surface", "eig", "--surface", cfg, "--factor", "1",
                   "--tau", "1.0", "--grid", "32,2.5", "--k-max", "12",
                   "--out", str(out)])
    assert rc == 0
    assert (out / "eigenvalues.csv").exists()
    sl = sx.load_slice(str(out / "green_j1_tau1.slice"))
    assert sl.grid.N == 32
    assert np.isfinite(sl.weights).all()


def test_surface_eig_bad_grid(cfg):
    rc = cli.main(["surface", "eig", "--surface", cfg, "--factor", "1",
                   "--tau", "1.0", "--grid", "32x2.5"])
    assert rc == 2


def test_kernel_build(cfg, tmp_path):
    out = tmp_path / "kb"
    rc = cli.main(["kernel", "build", "--surface", cfg, "--J", "2",
                   "--out", str(out)])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["J"] == [2]
    assert len(manifest["slices"]) == 2 * 5   # n factors x n tau nodes
    first = manifest["slices"][0]
    sl = sx.load_slice(str(out / first["file"]))
    assert sl.grid.N == 32
    assert len(sl.weights) == first["k"]


def test_kernel_build_bad_J(cfg, tmp_path):
    rc = cli.main(["kernel", "build", "--surface", cfg, "--J", "7",
                   "--out", str(tmp_path / "x")])
    assert rc == 2


def test_kernel_check_first0(capsys):
    rc = cli.main(["kernel", "check", "--identity", "first0"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["identity"] == "first0"
    assert out["residual"] == 0.0
    assert out["pass"] is True


def test_kernel_check_mix(capsys):
    rc = cli.main(["kernel", "check", "--identity", "mix"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["pass"] is True
    assert any(c["should_vanish"] for c in out["cases"])
