import json

import pytest

from lpustat.cli import ConfigError, load_config, main, resolve


def run(tmp_path, *args):
    return main(list(args) + ["--output-dir", str(tmp_path)])


def test_selftest_passes(tmp_path, capsys):
    assert run(tmp_path, "selftest") == 0
    report = json.loads((tmp_path / "selftest.json").read_text())
    assert all(c["passed"] for c in report["checks"])
    assert "created" in report["metadata"]


def test_simulate_then_estimate(tmp_path):
    assert run(tmp_path, "simulate", "--set", "sample.n=300", "--seed", "3") == 0
    csv_path = tmp_path / "path.csv"
    assert csv_path.read_text().startswith("# config ")
    assert run(tmp_path, "estimate", "--set", f"estimate.input={csv_path}", "--set", "ustat.B=20000") == 0
    report = json.loads((tmp_path / "estimate.json").read_text())
    assert report["m"] == 3 and report["B"] == 20000 and report["r"] == 7
    assert report["config"]["resolved"]["seed"] == 0
    assert report["se_plugin"] > 0


def test_missing_pre_observations_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("index,y\n1,0.5\n2,0.1\n")
    assert run(tmp_path, "estimate", "--set", f"estimate.input={bad}") == 1
    assert "r" in capsys.readouterr().err


def test_config_errors_exit_1(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[model]\nname = AR7\n")
    assert run(tmp_path, "simulate", "--config", str(cfg)) == 1
    assert run(tmp_path, "simulate", "--config", str(tmp_path / "none.ini")) == 1
    assert run(tmp_path, "simulate", "--set", "bogus") == 1
    assert run(tmp_path, "simulate", "--set", "innovations.family=cauchy") == 1
    assert run(tmp_path, "study", "--set", "study.estimators=mle") == 1


def test_numerical_failure_exit_2(tmp_path):
    assert run(tmp_path, "simulate", "--set", "model.theta=1.5") == 2


def test_innovation_section_replaces_family(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[innovations]\nfamily = laplace\nscale = 2\n[sample]\nn = 100\n")
    cp = load_config(cfg)
    resolved = resolve(cp, "simulate")
    assert resolved["innovations"] == {"family": "laplace", "scale": 2.0}


def test_auto_fields_resolved():
    cfg = resolve(load_config(None, ["sample.n=2000"]), "study")
    assert cfg["ustat"]["m"] == 5 and cfg["ustat"]["B"] == 2_000_000 and cfg["r"] == 10
    with pytest.raises(ConfigError):
        resolve(load_config(None, ["ustat.mode=approx"]), "study")


def test_study_rows_and_byte_identical_rerun(tmp_path):
    args = ["study", "--set", "sample.n=60", "--set", "study.N=3", "--seed", "5"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b)]) == 0
    text_a = (a / "study.csv").read_text()
    text_b = (b / "study.csv").read_text().replace(str(b), str(a))
    assert text_a == text_b
    rows = [l for l in text_a.splitlines() if not l.startswith("#")]
    assert len(rows) == 1 + 4 + 2
    assert json.loads((a / "study.json").read_text())["n_errors"] == 0


def test_gradient_check_command(tmp_path):
    assert run(tmp_path, "gradient-check", "--set", "innovations.family=normal",
               "--set", "gradient.mc=100000") == 0
    rep = json.loads((tmp_path / "gradient.json").read_text())
    assert len(rep["checks"]) == 2
    assert all(c["relative_error"] < 0.1 for c in rep["checks"])


def test_inline_comments_and_unknown_keys(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[sample]\nn = 120   ; observations\nr = 4\n")
    assert resolve(load_config(cfg), "simulate")["n"] == 120
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(None, ["sample.nn=5"])
    cfg.write_text("[ustat]\nBB = 3\n")
    assert run(tmp_path, "simulate", "--config", str(cfg)) == 1
