import json
import math

from click.testing import CliRunner

from conestokes.cli import main


def run(*args):
    return CliRunner().invoke(main, list(args))


def test_spectrum_example():
    res = run("spectrum", "--theta0", "1.5708", "--mu-max", "4")
    assert res.exit_code == 0
    rows = json.loads(res.output)
    assert any(abs(r["mu"] - 1) < 1e-4 and r["sigma"] == 2 for r in rows)
    assert all(r["citation"] for r in rows)


def test_intervals_example():
    res = run("intervals", "--lambda1", "1", "--simple", "--mu2", "1", "--re-lambda2", "2", "--beta", "0.5")
    assert res.exit_code == 0
    assert res.output.splitlines()[1].split(",")[1] == "NotFredholm"


def test_validation_exit_code():
    res = run("intervals", "--lambda1", "1.5", "--mu2", "1", "--beta", "0")
    assert res.exit_code == 2
    err = json.loads(res.stderr if hasattr(res, "stderr") else res.output)
    assert err["error"] == "domain"


def test_deterministic_output(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert run("singular", "--theta0", str(math.pi / 3), "--mu-index", "2", "--depth", "1",
                   "--out", str(p)).exit_code == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["citation"]


def test_config_defaults_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"spectrum": {"theta0": math.pi / 3, "mu_max": 1.6}}))
    rows = json.loads(run("--config", str(cfg), "spectrum").output)
    assert len(rows) == 2
    rows = json.loads(run("--config", str(cfg), "spectrum", "--mu-max", "3").output)
    assert len(rows) == 3


def test_kernels_csv():
    res = run("kernels", "--theta0", str(math.pi / 3), "--kind", "H_p", "--j", "1", "--x", "0.3,0,0.6",
              "--y", "0.2,0.1,0.8", "--t-grid", "0.1,1")
    assert res.exit_code == 0
    lines = res.output.strip().splitlines()
    assert lines[0].startswith("t,v0,error")
    assert len(lines) == 3


def test_timeterm_manifest(tmp_path):
    man = {"points": [[0.2, 0.1, 0.6]], "weights": [0.1],
           "frames": [{"t": 0.0, "file": "f0.json"}, {"t": 1.0, "f": [[1, 0, 0]], "g": [1.0]}]}
    (tmp_path / "f0.json").write_text(json.dumps({"f": [[1, 0, 0]], "g": [1.0]}))
    (tmp_path / "m.json").write_text(json.dumps(man))
    res = run("timeterm", "--theta0", str(math.pi / 3), "--term", "S", "--x", "0.3,0.1,0.6", "--t-grid", "1.0",
              "--manifest", str(tmp_path / "m.json"))
    assert res.exit_code == 0, res.output
    assert res.output.splitlines()[1].endswith("time-terms")


def test_bad_kernel_point():
    res = run("kernels", "--theta0", "1.0", "--x", "1,0,-1", "--y", "0,0,1")
    assert res.exit_code == 2
