import json
import subprocess
import sys

import pytest

from xy_butterfly import __version__
from xy_butterfly.cli import OUTPUT_ENV, RunConfig, main


def header(path):
    meta = {}
    for line in path.read_text().splitlines():
        if not line.startswith("#"):
            break
        key, _, value = line[1:].strip().partition("=")
        meta[key] = value
    return meta


def body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


@pytest.mark.parametrize("flags,expected", [(["--r", "0", "--h", "0"], 2.0), (["--r", "2.1", "--h", "0.8"], 3.75)])
def test_analytic_prints_velocity(capsys, flags, expected):
    assert main(["analytic", "--J", "1", *flags]) == 0
    out = capsys.readouterr().out.strip()
    assert float(out) == pytest.approx(expected, abs=0.01)
    if expected == 2.0:
        assert out == "2.000000"


def test_analytic_sweep_csv(tmp_path):
    out = tmp_path / "grid.csv"
    assert main(["analytic", "--sweep", "--points", "7", "--out", str(out)]) == 0
    assert header(out)["version"] == __version__
    rows = body(out)
    assert rows[0] == "r,h,v_B"
    table = {}
    for line in rows[1:]:
        r, h, v = map(float, line.split(","))
        table[(r, h)] = v
    assert len(table) == 49
    for (r, h), v in table.items():
        assert table[(-r, h)] == pytest.approx(v, abs=1e-9)
        assert table[(r, -h)] == pytest.approx(v, abs=1e-9)


def test_config_round_trip(tmp_path, capsys):
    cfg_path = tmp_path / "run.json"
    assert main(["velocity", "--n", "3", "--r", "0.5", "--p2", "0.01", "--dump-config"]) == 0
    text = capsys.readouterr().out
    cfg_path.write_text(text)
    assert RunConfig.from_dict(json.loads(text)).to_json() == text
    assert main(["velocity", "--config", str(cfg_path), "--dump-config"]) == 0
    assert capsys.readouterr().out == text


def test_flags_override_config(tmp_path, capsys):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({"model": {"n": 4, "r": 0.3}}))
    assert main(["otoc", "--config", str(cfg_path), "--r", "0.9", "--dump-config"]) == 0
    model = json.loads(capsys.readouterr().out)["model"]
    assert model["n"] == 4 and model["r"] == 0.9


def test_unknown_config_key_is_a_usage_error(tmp_path, capsys):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({"modle": {}}))
    assert main(["otoc", "--config", str(cfg_path)]) == 2
    assert capsys.readouterr().err.count("\n") == 1


def test_missing_config_exits_nonzero(tmp_path, capsys):
    code = main(["velocity", "--config", str(tmp_path / "absent.json")])
    assert code != 0
    err = capsys.readouterr().err
    assert err.startswith("xy-butterfly: error") and err.count("\n") == 1


def test_compile_rejects_zero_layers(tmp_path, capsys):
    assert main(["compile", "--n", "3", "--depths", "0,2", "--output-dir", str(tmp_path)]) == 2
    assert not list(tmp_path.iterdir())


def test_compile_is_deterministic(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"model": {"n": 3, "r": 0.5, "h": 0.2}, "compiler": {"trust_region": {"restarts": 2, "max_iters": 60}}}))
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        assert main(["compile", "--config", str(cfg), "--t", "0.5", "--depths", "2", "--output-dir", str(d)]) == 0
    assert (a / "compile_m2.json").read_text() == (b / "compile_m2.json").read_text()
    rows = body(a / "error_vs_layers.csv")
    assert rows[0] == "layers,rtr_error,trotter_error"
    payload = json.loads((a / "compile_m2.json").read_text())
    assert payload["metadata"]["seed"] == 0 and payload["t"] == 0.5


def test_velocity_artifacts(tmp_path, capsys):
    assert main(["velocity", "--n", "5", "--output-dir", str(tmp_path)]) == 0
    for name in ("surface.csv", "fit.json", "summary.csv"):
        assert (tmp_path / name).exists()
    meta = header(tmp_path / "summary.csv")
    assert {"config_hash", "seed", "version"} <= set(meta)
    rows = body(tmp_path / "summary.csv")
    assert rows[0] == "J,r,h,n,mode,vB_analytic,vB_fit,rel_dev"
    fields = dict(zip(rows[0].split(","), rows[1].split(",")))
    assert float(fields["vB_fit"]) == pytest.approx(2.066, rel=0.03)
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["metadata"]["config_hash"] == meta["config_hash"]
    assert header(tmp_path / "surface.csv")["config_hash"] == meta["config_hash"]


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert main(["otoc", "--n", "3", "--t-max", "0.2"]) == 0
    assert body(tmp_path / "surface.csv")


def test_sweep_with_parallel_jobs(tmp_path):
    argv = ["sweep", "--n", "4", "--t-max", "2", "--r-values", "0,0.5", "--h-values", "0.2"]
    assert main([*argv, "--jobs", "2", "--output-dir", str(tmp_path)]) == 0
    parallel = (tmp_path / "sweep.csv").read_text()
    assert main([*argv, "--jobs", "1", "--output-dir", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.csv").read_text() == parallel
    assert len(body(tmp_path / "sweep.csv")) == 3


def test_bad_jobs_value(tmp_path):
    assert main(["sweep", "--jobs", "0", "--output-dir", str(tmp_path)]) == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "xy_butterfly", "analytic", "--r", "2.1", "--h", "0.8"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert float(proc.stdout) == pytest.approx(3.75, abs=0.01)
