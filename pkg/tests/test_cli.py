import csv

import pytest

from credfilter.cli import load_config, run_command

FAST = ["--set", "pricing.nv=200", "--set", "pricing.nt_per_year=20", "--set", "pricing.nt_stock=100"]


def _sim(out, *extra):
    return run_command(["simulate", "--seed", "7", "--out", str(out), "--n-paths", "2", "--horizon", "0.3",
                        *FAST, *extra])


def test_simulate_deterministic(tmp_path):
    assert _sim(tmp_path / "a") == 0
    assert _sim(tmp_path / "b") == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "path_00000.csv" in files and "path_00001.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_header_echoes_config(tmp_path):
    assert _sim(tmp_path) == 0
    text = (tmp_path / "path_00000.csv").read_text().splitlines()
    head = [ln for ln in text if ln.startswith("#")]
    assert any("seed" in ln and "7" in ln for ln in head)
    assert any("sigma" in ln for ln in head)
    cols = next(ln for ln in text if not ln.startswith("#")).split(",")
    assert cols[:5] == ["t", "V", "Y", "S", "lambda"]


def test_missing_seed_is_config_error(tmp_path, capsys):
    code = run_command(["simulate", "--out", str(tmp_path), "--n-paths", "1", "--horizon", "0.1"])
    assert code == 2
    assert "seed" in capsys.readouterr().err


def test_bad_config_value_reports_line(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[model]\nsigma = -0.2\n")
    code = run_command(["price", "--config", str(ini), "--seed", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "bad.ini:2" in capsys.readouterr().err


@pytest.mark.parametrize("setting", ["model.nope=1", "filter.m=4", "sim.n_paths=abc", "model.kappa=3"])
def test_invalid_overrides(tmp_path, setting):
    assert run_command(["price", "--seed", "1", "--out", str(tmp_path), "--set", setting]) == 2


def test_unknown_command():
    assert run_command(["frobnicate"]) == 2


def test_load_config_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[model]\npreset = near_default_news\nsigma = 0.25\n[sim]\nseed = 3\n")
    cfg = load_config(str(ini), None, None, ["model.sigma=0.3"], {})
    assert cfg.model.sigma == 0.3
    assert cfg.model.c2 == 25.0
    assert cfg.preset == "near_default_news"
    assert cfg.seed == 3


def test_price(tmp_path):
    assert run_command(["price", "--seed", "1", "--out", str(tmp_path), *FAST]) == 0
    with open(tmp_path / "prices.csv") as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    prices = {r["claim"]: float(r["price"]) for r in rows}
    assert 0.9 < prices["survival_1"] < 1.0
    assert 0.0 < prices["default_5"] < 1.0
    assert 15.0 < prices["stock"] < 35.0


def test_calibrate_fixture_round_trip(tmp_path):
    fx = tmp_path / "quotes.csv"
    assert run_command(["calibrate", "--seed", "1", "--out", str(tmp_path), "--write-fixture", str(fx), *FAST]) == 0
    before = fx.read_bytes()
    assert run_command(["calibrate", "--seed", "1", "--out", str(tmp_path), "--in", str(fx), *FAST]) == 0
    assert fx.read_bytes() == before
    with open(tmp_path / "calibration_residuals.csv") as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    assert rows
    assert max(abs(float(r["residual"])) for r in rows) < 1e-8
    assert (tmp_path / "calibrated_psi.csv").exists()
    assert (tmp_path / "calibrated_density.csv").exists()


def test_calibrate_infeasible_is_numerical_error(tmp_path, capsys):
    q = tmp_path / "q.csv"
    q.write_text("instrument_id,kind,maturity,value\ns2,survival,2,1.5\n")
    assert run_command(["calibrate", "--seed", "1", "--out", str(tmp_path), "--in", str(q), *FAST]) == 3
    assert "numerical error" in capsys.readouterr().err


def test_calibrate_bad_quote_file(tmp_path, capsys):
    q = tmp_path / "q.csv"
    q.write_text("instrument_id,kind,maturity,value\ns2,survival,two,0.9\n")
    assert run_command(["calibrate", "--seed", "1", "--out", str(tmp_path), "--in", str(q), *FAST]) == 2
    assert "line 2" in capsys.readouterr().err


def test_validate_quick(tmp_path, capsys):
    assert run_command(["validate", "--quick", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[FAIL]" not in out
    assert out.count("[PASS]") >= 7
