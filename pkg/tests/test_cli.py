import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from fracspde.cli import EXPERIMENTS, _parse_length, build_grid, main
from fracspde.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def _load(name):
    return yaml.safe_load((CONFIGS / f"{name}.yaml").read_text())


@pytest.mark.parametrize("name", ["deterministic", "linear_wiener", "linear_levy", "picard", "time_change",
                                  "whitenoise", "verify_suite"])
def test_shipped_configs_succeed(name, tmp_path, capsys):
    assert main(["run", str(CONFIGS / f"{name}.yaml"), "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out and all(line.startswith("PASS") for line in out.strip().splitlines())


def test_bad_eps1_exits_with_config_status(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "bad_eps1.yaml"), "--output-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "eps1 > alpha(1/2 - 1/p)" in err
    assert not (tmp_path / "manifest.json").exists()


def test_picard_divergence_exits_with_its_own_status(tmp_path, capsys):
    raw = _load("picard")
    # 16 windows of ~60 steps each cannot settle in two sweeps
    raw["solver"].update(picard_max_iters=2, picard_tol=1e-14, T=1.0, dt=0.001)
    raw["coefficients"]["dcoef"] = 50.0
    assert main(["run", str(_write(tmp_path, raw)), "--output-dir", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "diverged" in err and "ratios" in err


@pytest.mark.parametrize("patch", [
    {"experiment": "nope"},
    {"bogus": 1},
    {"mc_paths": 0},
    {"solver": {"alpha": 2.5}},
    {"solver": {"alpha": 1.0, "speed": 3}},
    {"data": {"u0": "sine"}},
    {"diffusivity": {"kind": "brownian"}},
])
def test_invalid_configs_exit_2(patch, tmp_path):
    raw = _load("deterministic")
    raw.update(patch)
    assert main(["run", str(_write(tmp_path, raw)), "--output-dir", str(tmp_path / "o")]) == 2


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "absent.yaml")]) == 2


def test_manifest_lists_artifacts_with_digests(tmp_path):
    assert main(["run", str(CONFIGS / "deterministic.yaml"), "--output-dir", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 0
    assert {"python", "numpy", "scipy"} <= set(manifest["environment"])
    assert manifest["artifacts"]
    for art in manifest["artifacts"]:
        data = (tmp_path / art["path"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == art["sha256"]
    names = [r["name"] for e in manifest["experiments"] for r in e["reports"]]
    assert "eigenmode" in names


def test_same_seed_gives_identical_artifacts(tmp_path):
    cfg = str(CONFIGS / "linear_wiener.yaml")
    main(["run", cfg, "--output-dir", str(tmp_path / "a")])
    main(["run", cfg, "--output-dir", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert a["artifacts"] == b["artifacts"]


def test_different_seed_changes_artifacts(tmp_path):
    raw = _load("linear_wiener")
    main(["run", str(_write(tmp_path, raw, "a.yaml")), "--output-dir", str(tmp_path / "a")])
    raw["seed"] = raw.get("seed", 0) + 1
    main(["run", str(_write(tmp_path, raw, "b.yaml")), "--output-dir", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert a["artifacts"] != b["artifacts"]


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in EXPERIMENTS:
        assert name in out


def test_sweep_over_time_step(tmp_path):
    code = main(["sweep", str(CONFIGS / "deterministic.yaml"), "--axis", "dt", "--factors", "1,0.5",
                 "--output-dir", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "sweep.json").read_text())
    eig = next(e for e in summary if e["name"] == "eigenmode")
    assert eig["values"] == pytest.approx([0.01, 0.005])
    assert len(eig["ratios"]) == 2
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["sweep"] == {"axis": "dt", "factors": [1.0, 0.5]}
    assert (tmp_path / "sweep.csv").exists()


@pytest.mark.parametrize("factors", ["1,-1", "a,b"])
def test_sweep_rejects_bad_factors(factors, tmp_path):
    assert main(["sweep", str(CONFIGS / "deterministic.yaml"), "--axis", "dt", "--factors", factors,
                 "--output-dir", str(tmp_path)]) == 2


def test_unknown_axis_is_an_argparse_error():
    with pytest.raises(SystemExit) as err:
        main(["sweep", str(CONFIGS / "deterministic.yaml"), "--axis", "colour", "--factors", "1"])
    assert err.value.code == 2


@pytest.mark.parametrize("text,value", [("2pi", 6.283185307179586), ("2*pi", 6.283185307179586),
                                        ("pi", 3.141592653589793), ("1.5", 1.5)])
def test_length_parsing(text, value):
    assert _parse_length(text) == pytest.approx(value)


def test_length_parsing_rejects_expressions():
    with pytest.raises(ConfigError):
        _parse_length("__import__('os')")
    assert build_grid({"n": 16, "length": "4pi"}).length == pytest.approx(4 * 3.141592653589793)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fracspde.cli", "list-experiments"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0
    assert "whitenoise" in proc.stdout
