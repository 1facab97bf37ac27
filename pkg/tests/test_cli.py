import json
import subprocess
import sys
from importlib import resources
from pathlib import Path

import pytest
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

from wittenexit.cli import ExperimentConfig, main
from wittenexit.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _validator():
    reg = Registry()
    docs = {}
    for name in ("report.schema.json", "config.schema.json"):
        doc = json.loads(resources.files("wittenexit").joinpath("schemas", name).read_text())
        docs[name] = doc
        reg = reg.with_resource(doc["$id"], Resource.from_contents(doc))
    return Draft202012Validator(docs["report.schema.json"], registry=reg)


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def _run(cmd, config, out, *extra):
    code = main([cmd, "--config", str(config), "--out", str(out), *extra])
    report = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    return code, report


SMALL_MC = {"potential": {"name": "harmonic1d", "params": {}}, "beta": [4],
            "mc": {"n": 300, "dt": 0.001, "seed": 5}}


def test_config_from_dict():
    cfg = ExperimentConfig.from_dict({"potential": {"name": "doublewell1d"}, "beta": [10, 20]})
    assert cfg.h_values == [0.2, 0.1]
    assert cfg.nu(0.1) == pytest.approx(0.1**1.2)
    assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
    for bad in ({"potential": {"name": "doublewell1d"}, "h": [0.1], "beta": [10]},
                {"potential": {"name": "doublewell1d"}, "h": [-0.1]},
                {"potential": {"name": "doublewell1d"}, "h": [0.1], "mc": {"steps": 3}},
                {"h": [0.1]}):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"potential": {"name": "nosuch"}, "h": [0.1]}).build()


def test_check_exit_codes(tmp_path):
    code, rep = _run("check", CONFIGS / "check_fig_ok.json", tmp_path / "ok")
    assert code == 0 and rep["passed"]
    assert (tmp_path / "ok" / "agmon.csv").exists()
    code, rep = _run("check", CONFIGS / "check_fig_notok.json", tmp_path / "notok")
    assert code == 1 and not rep["passed"]
    code, _ = _run("check", CONFIGS / "check_flatbottom.json", tmp_path / "flat")
    assert code == 0


def test_usage_errors(tmp_path, capsys):
    assert main(["check", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["check", "--config", str(bad), "--out", str(tmp_path)]) == 2
    conflict = _write(tmp_path, {"potential": {"name": "doublewell1d"}, "h": [0.1], "beta": [10]})
    assert main(["check", "--config", str(conflict), "--out", str(tmp_path)]) == 2
    ok = CONFIGS / "check_fig_ok.json"
    assert main(["check", "--config", str(ok), "--out", str(tmp_path), "--threads", "0"]) == 2
    # h below the representable range of exp(-2 kappa/h)
    assert main(["asymptotics", "--config", str(ok), "--out", str(tmp_path), "--h", "0.01", "0.02", "0.03"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["check", "--config", str(ok), "--h", "0.1", "--beta", "10"])
    assert e.value.code == 2


def test_numeric_failure_exit_code(tmp_path):
    # a perturbation reaching the outer boundary violates the support condition
    cfg = dict(SMALL_MC, perturbation={"type": "bump", "center": [0.9], "radius": 0.3, "amplitude": 0.01})
    assert main(["hyperdyn", "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 3


def test_reports_match_schema(tmp_path):
    v = _validator()
    _, rep = _run("check", CONFIGS / "check_fig_ok.json", tmp_path / "c")
    v.validate(rep)
    _, rep = _run("spectrum", CONFIGS / "spectrum_flatbottom.json", tmp_path / "s")
    v.validate(rep)
    assert rep["passed"] and rep["seed"] is None
    _, rep = _run("mc", _write(tmp_path, SMALL_MC), tmp_path / "m")
    v.validate(rep)
    assert rep["seed"] == 5 and rep["schema_version"] == 1


def test_outputs_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL_MC)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    _run("mc", cfg, a)
    _run("mc", cfg, b, "--threads", "3")
    _run("mc", cfg, c, "--seed", "6")
    for name in ("report.json", "samples.csv", "exitdensity.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "samples.csv").read_bytes() != (c / "samples.csv").read_bytes()
    assert json.loads((c / "report.json").read_text())["seed"] == 6


def test_spectrum_threads_identical(tmp_path):
    cfg = CONFIGS / "spectrum_flatbottom.json"
    _run("spectrum", cfg, tmp_path / "a")
    _run("spectrum", cfg, tmp_path / "b", "--threads", "2")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "eigenvalues.csv" in files and "exitdensity.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "wittenexit.cli", "check", "--config",
                        str(CONFIGS / "check_fig_notok.json"), "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 1 and r.stdout.startswith("check: fail")
