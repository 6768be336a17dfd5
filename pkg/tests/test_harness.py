import csv
import hashlib
import json
import math

import pytest

from stripelab.harness import (BaselineError, ConfigError, StudyConfig, TorusConfig, load_config, parse_list,
                               run_baseline_torus, run_gamma_study)
from stripelab.harness.cli import main
from stripelab.pattern import ResonanceError

QUICK = """
[domain]
curve = circle
radius = 1
half_width = 1/4
samples = 600

[study]
n_list = 2, 4
h_ratio = 8
d_solver = upper
rays = false
tube_samples = 256, 8
"""


def test_parse_list():
    assert parse_list("1/16, 0.5;2") == [0.0625, 0.5, 2.0]
    assert parse_list("2,4", int) == [2, 4]
    assert parse_list(None) == []


def test_config_defaults_schedule():
    cfg = StudyConfig()
    assert cfg.eps_values == [1 / 16, 1 / 32, 1 / 64]
    assert cfg.h_for(1 / 16) == 1 / 128


def test_config_empty_schedule():
    with pytest.raises(ConfigError):
        StudyConfig(n_list=[])


def test_config_resonance_names_offender():
    with pytest.raises(ResonanceError, match="0.05"):
        StudyConfig(eps_list=[1 / 16, 0.05])


def test_config_h_ratio_too_small():
    with pytest.raises(ConfigError):
        StudyConfig(h_ratio=3)


def test_config_unknown_section():
    with pytest.raises(ConfigError):
        StudyConfig.from_text(QUICK + "\n[extras]\nx = 1\n")


def test_config_from_text_and_digest():
    a = StudyConfig.from_text(QUICK)
    b = StudyConfig.from_text(QUICK)
    assert a.n_list == [2, 4] and a.d_solver == "upper" and a.rays is False
    assert a.tube_samples == (256, 8)
    assert a.digest() == b.digest()
    assert a.digest() != StudyConfig().digest()


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "none.cfg"))


def test_load_config_overrides(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text(QUICK)
    cfg = load_config(str(f), {"exact_cap": 7, "out_dir": None})
    assert cfg.exact_cap == 7


def test_study_writes_outputs(tmp_path):
    cfg = StudyConfig.from_text(QUICK)
    res = run_gamma_study(cfg, str(tmp_path))
    assert {"study.csv", "G_vs_eps.svg", "manifest.json"} <= set(res.files)
    rows = list(csv.DictReader(open(res.files["study.csv"])))
    assert [float(r["eps"]) for r in rows] == [1 / 16, 1 / 32]
    assert all(r["error"] == "" for r in rows)
    man = json.loads(res.files["manifest.json"].read_text())
    for name in ("study.csv", "G_vs_eps.svg"):
        digest = hashlib.sha256(res.files[name].read_bytes()).hexdigest()
        assert man["files"][name] == digest
    assert man["config_sha256"] == cfg.digest()
    assert man["reference"]["tube"] == pytest.approx(math.pi / 4 * math.log(5 / 3), rel=1e-5)


def test_study_is_reproducible(tmp_path):
    cfg = StudyConfig.from_text(QUICK)
    a = run_gamma_study(cfg, str(tmp_path / "a"))
    b = run_gamma_study(cfg, str(tmp_path / "b"))
    for name in ("study.csv", "G_vs_eps.svg"):
        assert a.files[name].read_bytes() == b.files[name].read_bytes()


# cli

def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_unknown_flag(capsys):
    code, _, _ = _run(["limit", "--nope"], capsys)
    assert code == 2


def test_cli_energy_without_source(capsys):
    code, out, _ = _run(["energy"], capsys)
    assert code == 2
    assert json.loads(out.strip().splitlines()[-1])["exit_code"] == 2


def test_cli_bad_eps(capsys):
    code, out, _ = _run(["gen", "--eps", "0.05"], capsys)
    assert code == 2
    assert "resonance" in out


def test_cli_coarse_h(capsys):
    code, _, _ = _run(["gen", "--eps", "1/16", "--h", "0.03"], capsys)
    assert code == 2


def test_cli_limit(capsys):
    code, out, _ = _run(["limit", "--h", "0.02"], capsys)
    assert code == 0
    rec = json.loads(out)
    assert rec["G0_tube"] == pytest.approx(0.4012, abs=1e-4)
    assert rec["in_limit_class"] is True


def test_cli_study_config_out(tmp_path, capsys):
    cfg = tmp_path / "q.cfg"
    cfg.write_text(QUICK)
    out = tmp_path / "run"
    code, text, _ = _run(["study", "--config", str(cfg), "--out", str(out)], capsys)
    assert code == 0
    assert (out / "study.csv").exists() and (out / "G_vs_eps.svg").exists()
    assert json.loads(text)["failed"] == 0


def test_cli_study_csv_stdout(tmp_path, capsys):
    cfg = tmp_path / "q.cfg"
    cfg.write_text(QUICK)
    code, text, _ = _run(["study", "--config", str(cfg), "--out", str(tmp_path / "r"), "--format", "csv",
                          "--no-plot"], capsys)
    assert code == 0
    assert text.splitlines()[0].startswith("N,eps")
    assert not (tmp_path / "r" / "G_vs_eps.svg").exists()


def test_cli_firstvar_ngon(capsys):
    code, out, _ = _run(["firstvar", "--ngon", "1000", "--radius", "0.9"], capsys)
    assert code == 0
    rec = json.loads(out)
    assert rec["H_max"] == pytest.approx(1 / 0.9, abs=1e-3)
    assert rec["max_tangential"] <= 1e-9


def test_cli_defect_csv(tmp_path, capsys):
    cfg = tmp_path / "q.cfg"
    cfg.write_text(QUICK)
    code, out, _ = _run(["defect", "--config", str(cfg), "--k", "16", "--format", "csv"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "eps,weak_gap,strong_gap,D_16"
    assert len(lines) == 3


def test_cli_energy_recovery_upper(capsys):
    code, out, _ = _run(["energy", "--recovery", "--d-source", "upper-bound-map", "--eps", "1/16"], capsys)
    assert code == 0
    assert json.loads(out)["d_source"] == "upper-bound-map"


# torus baseline

SMALL = dict(width=0.5, height=0.5, eps=1 / 16, h_ratio=8)


def test_baseline_optimal_period():
    row = run_baseline_torus(TorusConfig(**SMALL))
    assert abs(row.G) <= 0.05
    assert row.rel_gap <= 1e-6


def test_baseline_wide_period_positive():
    # period 8 eps: G = A / (4 eps^2)
    row = run_baseline_torus(TorusConfig(period_factor=2.0, **SMALL), check=False)
    assert row.G == pytest.approx(0.25 * 0.25 / (1 / 16) ** 2, rel=1e-6)


def test_baseline_check_raises():
    with pytest.raises(BaselineError):
        run_baseline_torus(TorusConfig(period_factor=2.0, **SMALL), check=True)


def test_cli_baseline(capsys):
    code, out, _ = _run(["baseline", "--width", "0.5", "--height", "0.5"], capsys)
    assert code == 0
    assert abs(json.loads(out)["G"]) <= 0.05


def test_baseline_non_optimal_width():
    # p = 6 eps: Per = A/(3 eps), d = 3 A eps / 4, G = A / (12 eps^2) > 0
    tc = TorusConfig(width=0.75, height=0.5, eps=1 / 16, period_factor=1.5, h_ratio=8)
    row = run_baseline_torus(tc, check=False)
    assert row.G > 0
    assert row.G == pytest.approx(0.375 / (12 * (1 / 16) ** 2), rel=1e-6)


def test_baseline_tilted_45():
    # 45 degree bands fit the unit torus for eps = 1/(16 sqrt 2); h = 1/192 balances the cells
    eps = 1 / (16 * math.sqrt(2))
    axis = run_baseline_torus(TorusConfig(eps=1 / 16, h_ratio=8))
    tilt = run_baseline_torus(TorusConfig(eps=eps, angle_deg=45.0, h_ratio=eps * 192), cap=40000)
    assert abs(tilt.G) <= max(2 * abs(axis.G), TorusConfig().tol_zero)
