import json

import numpy as np
import pytest

from crmag.cli import main
from crmag.energy import make_geometry, uniform_state
from crmag.fieldio import read_field, write_field
from crmag.spectral import SpectralGrid, VectorField
from crmag.symbols import build_operator, save_operator

CONFIG = """
[grid]
counts = [8, 8, 16]
[geometry]
omega = "rect(1, 1)"
[material]
alpha = 0.1
anisotropy.kind = "uniaxial"
anisotropy.axis = [1, 0, 0]
anisotropy.strength = 1.0
[minimize]
eps = {eps}
[sweep]
eps = [1.0, 0.5, 0.25]
"""


@pytest.fixture
def config(tmp_path):
    def make(eps=0.5):
        p = tmp_path / f"run_{eps}.toml"
        p.write_text(CONFIG.format(eps=eps))
        return str(p)

    return make


def random_file(path, channels, seed=0, counts=(8, 8, 8)):
    g = SpectralGrid(counts, (1, 1, 1), 0.5)
    write_field(VectorField(g, np.random.default_rng(seed).standard_normal(counts + (channels,))), path)
    return str(path)


# -- check-rank --------------------------------------------------------------------


@pytest.mark.parametrize("name, rank", [("maxwell", 3), ("div", 1)])
def test_check_rank_builtin(name, rank, capsys):
    assert main(["check-rank", name]) == 0
    assert f"rank {rank}, constant: yes" in capsys.readouterr().out


def test_check_rank_dropping_file(tmp_path, capsys):
    save_operator(build_operator([[[1, 0], [0, 0]], [[0, 0], [0, 1]]]), tmp_path / "op.txt")
    assert main(["check-rank", str(tmp_path / "op.txt"), "--samples", "50"]) == 1
    out = capsys.readouterr().out
    assert "constant: no" in out and "offending frequencies" in out


def test_check_rank_unknown(capsys):
    assert main(["check-rank", "grad"]) == 1
    assert "unknown operator" in capsys.readouterr().err


# -- project / demag ---------------------------------------------------------------


def test_project_random(tmp_path, capsys):
    f = random_file(tmp_path / "u.crml", 6)
    out = tmp_path / "o"
    assert main(["project", f, "--operator", "maxwell", "--out", str(out)]) == 0
    report = json.loads((out / "project.json").read_text())
    assert report["defect_after"] < 1e-10 < report["defect_before"]
    assert read_field(out / "projected.crml").grid.eps == 0.5


def test_project_free_field_unchanged(tmp_path):
    f = random_file(tmp_path / "u.crml", 6)
    main(["project", f, "--out", str(tmp_path / "a")])
    main(["project", str(tmp_path / "a" / "projected.crml"), "--out", str(tmp_path / "b")])
    a = read_field(tmp_path / "a" / "projected.crml").samples
    b = read_field(tmp_path / "b" / "projected.crml").samples
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_project_channel_mismatch(tmp_path, capsys):
    f = random_file(tmp_path / "u.crml", 3)
    out = tmp_path / "o"
    assert main(["project", f, "--operator", "maxwell", "--out", str(out)]) == 1
    assert "channels" in capsys.readouterr().err
    assert not out.exists()


def test_demag(tmp_path):
    geo = make_geometry((8, 8, 16), ("rect", 1, 1))
    write_field(uniform_state(geo, (0, 0, 1), 1.0), tmp_path / "m.crml")
    assert main(["demag", str(tmp_path / "m.crml"), "--eps", "0.5", "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "demag.json").read_text())
    assert rep["maxwell_residual"] < 1e-10 and rep["stray"] > 0 and rep["eps"] == 0.5


def test_missing_field_file(tmp_path, capsys):
    assert main(["demag", str(tmp_path / "none.crml"), "--out", str(tmp_path / "o")]) == 1
    assert "cannot read" in capsys.readouterr().err


# -- config-driven commands --------------------------------------------------------


def test_minimize_artifacts(tmp_path, config):
    out = tmp_path / "o"
    assert main(["minimize", "--config", config(), "--out", str(out)]) == 0
    rec = json.loads((out / "energy.json").read_text())
    assert {"eps", "exchange", "anisotropy", "stray", "total"} <= set(rec)
    assert rec["total"] == pytest.approx(rec["exchange"] + rec["anisotropy"] + rec["stray"])
    assert (out / "audit.csv").exists() and (out / "m.crml").exists() and (out / "h.crml").exists()


def test_minimize_under_resolved_warns(tmp_path, config):
    with pytest.warns(UserWarning, match="under-resolved"):
        assert main(["minimize", "--config", config(eps=0.1), "--out", str(tmp_path / "o")]) == 0


def test_minimize_limit(tmp_path, config):
    out = tmp_path / "o"
    assert main(["minimize", "--config", config(eps=0), "--out", str(out)]) == 0
    assert json.loads((out / "energy.json").read_text())["eps"] == 0.0


def test_sweep_passes_and_is_deterministic(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", config(), "--out", str(a)]) == 0
    assert main(["sweep", "--config", config(), "--out", str(b)]) == 0
    assert json.loads((a / "summary.json").read_text())["passed"] is True
    for name in ("sweep.csv", "summary.json", "m_0.crml"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_partial_exit_code(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(CONFIG.format(eps='0.5\nmax_iters = 1\ngrad_tol = 1e-12\ninit = "random"'))
    assert main(["sweep", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["passed"] is False and summary["failure"]["status"] == "max_iters"


def test_recover_slab(tmp_path, config):
    out = tmp_path / "o"
    assert main(["recover", "--config", config(), "--out", str(out)]) == 0
    rows = (out / "recovery.csv").read_text().splitlines()
    header = rows[0].split(",")
    for row in rows[1:]:
        rec = dict(zip(header, map(float, row.split(","))))
        assert rec["div_residual"] < 1e-10 and rec["curl_residual"] < 1e-10


def test_recover_needs_both_files(tmp_path, config, capsys):
    f = random_file(tmp_path / "m.crml", 3, counts=(8, 8, 16))
    assert main(["recover", "--config", config(), "--m0", f, "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()


def test_recover_invalid_input(tmp_path, config, capsys):
    m = random_file(tmp_path / "m.crml", 3, counts=(8, 8, 16))
    assert main(["recover", "--config", config(), "--m0", m, "--h0", m, "--out", str(tmp_path / "o")]) == 1
    assert "invalid recovery input" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_config_error_no_artifacts(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[grid]\ncounts = [8, 8, 16]\n[material]\nalpha = 0.1\nbeta = 2\n")
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(p), "--out", str(out)]) == 1
    assert "material.beta" in capsys.readouterr().err
    assert not out.exists()


def test_config_required(capsys):
    assert main(["sweep"]) == 1
    assert "--config" in capsys.readouterr().err


def test_threads_validation(capsys):
    assert main(["check-rank", "div", "--threads", "0"]) == 1
