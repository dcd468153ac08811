import json
import re

import pytest

from eaton_lab.cli import main
from eaton_lab.config import ConfigError, parse_config

SMALL = """
seed = 42

[model]
p = 3
a = 1.0
b = 1.5

[chain]
kernel = "lebesgue_T"
n_paths = 64
horizon = 2000
group_size = 16
dump_paths = 1

[example1]
p_list = [1, 3]
n_draws = 20000
n_paths = 40
horizon = 500

[risk]
theta_norms = [0.0, 3.0]
n_rep = 400

[validate]
partition = 3
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(SMALL)
    return path


def run(cfg, cmd, out, *extra):
    return main([cmd, "--config", str(cfg), "--out", str(out), *extra])


def test_moments_output(cfg, tmp_path):
    assert run(cfg, "moments", tmp_path / "o") == 0
    lines = (tmp_path / "o" / "moments.csv").read_text().splitlines()
    assert lines[0] == "alpha,k,value,residual_vs_expansion,scaled_residual"
    assert len(lines) == 13
    # floats carry 17 significant digits
    val = lines[1].split(",")[2]
    assert len(re.sub(r"[^0-9]", "", val.split("e")[0]).lstrip("0")) >= 15


def test_json_shape(cfg, tmp_path):
    assert run(cfg, "risk", tmp_path / "r") == 0
    assert run(cfg, "example1", tmp_path / "e") == 0
    doc = json.loads((tmp_path / "e" / "example1.json").read_text())
    assert set(doc) == {"config_hash", "results", "warnings"}
    assert len(doc["config_hash"]) == 64
    assert [r["p"] for r in doc["results"]] == [1, 3]


def test_refuses_overwrite(cfg, tmp_path):
    out = tmp_path / "o"
    assert run(cfg, "moments", out) == 0
    assert run(cfg, "moments", out) == 4
    assert run(cfg, "moments", out, "--force") == 0


@pytest.mark.parametrize("cmd", ["simulate", "example1", "risk"])
def test_determinism_across_threads(cfg, tmp_path, monkeypatch, cmd):
    monkeypatch.setenv("EATON_LAB_THREADS", "1")
    assert run(cfg, cmd, tmp_path / "a") == 0
    monkeypatch.setenv("EATON_LAB_THREADS", "3")
    assert run(cfg, cmd, tmp_path / "b") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_seed_override_changes_output(cfg, tmp_path):
    assert run(cfg, "risk", tmp_path / "a") == 0
    assert run(cfg, "risk", tmp_path / "b", "--seed", "7") == 0
    assert (tmp_path / "a" / "risk.csv").read_bytes() != (tmp_path / "b" / "risk.csv").read_bytes()


def test_stochastic_needs_seed(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[risk]\nn_rep = 200\n")
    assert main(["risk", "--config", str(path), "--out", str(tmp_path / "o")]) == 4
    assert main(["risk", "--config", str(path), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0


@pytest.mark.parametrize("text", [
    "[model]\np = 3\nbogus = 1\n",
    "[nosuch]\nx = 1\n",
    "seed = 'abc'\n",
    "[model\n",
    "[model]\np = 0\n",
    "[weights]\nc = -1.0\n",
])
def test_config_errors(tmp_path, text):
    path = tmp_path / "bad.toml"
    path.write_text(text)
    assert main(["moments", "--config", str(path), "--out", str(tmp_path / "o")]) == 4


def test_missing_config_and_bad_command(tmp_path):
    assert main(["moments", "--config", str(tmp_path / "none.toml")]) == 4
    assert main(["nonsense", "--config", "x"]) == 4


def test_bad_thread_env(cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("EATON_LAB_THREADS", "many")
    assert run(cfg, "risk", tmp_path / "o") == 4


def test_validate_sigma_finite_failure(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[model]\np = 3\na = 0.0\nb = 1.5\n")
    assert main(["validate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    doc = json.loads((tmp_path / "o" / "validate.json").read_text())
    assert doc["results"]["passed"] is False
    assert doc["warnings"]


def test_validate_passes_and_negative_control(cfg, tmp_path):
    assert run(cfg, "validate", tmp_path / "ok") == 0
    text = cfg.read_text() + "broken_symmetry = true\n"
    cfg.write_text(text)
    assert run(cfg, "validate", tmp_path / "bad") == 2


def test_numeric_failure_exit(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[capacity]\nkernel = "lebesgue_image"\nB_list = [30.0, 1e6]\nn_cells = 8\n')
    assert main(["capacity", "--config", str(path), "--out", str(tmp_path / "o")]) == 3


def test_config_hash_ignores_output_dir():
    a = parse_config('seed = 1\n[output]\ndir = "x"\n')
    b = parse_config('seed = 1\n[output]\ndir = "y"\n')
    c = parse_config('seed = 2\n')
    assert a.hash() == b.hash() != c.hash()
    with pytest.raises(ConfigError):
        parse_config('[output]\nfile = "z"\n')
