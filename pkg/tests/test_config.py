"""
Experiment configuration - Test Suite.

Proves:
 Group 1 - Resolution
   1.  Defaults fill every schema key; solver keys and params are separated
   2.  YAML exponents without a dot are read as floats
   3.  CLI overrides beat the file, the file beats the environment

 Group 2 - Rejection
   4.  Unknown keys, wrong types and mismatched experiment names raise ConfigError

 Group 3 - Hashing
   5.  The hash ignores out and threads but tracks everything else
"""
import pytest

from utils.config import SCHEMA, load_config, resolve_config
from utils.errors import ConfigError


@pytest.fixture
def write_yaml(tmp_path):
    def write(text: str):
        path = tmp_path / "config.yaml"
        path.write_text(text, encoding="utf-8")
        return str(path)
    return write


# ── Group 1: resolution ───────────────────────────────────────────────────────

def test_defaults(monkeypatch):
    monkeypatch.delenv("RICCATI_OUT", raising=False)
    monkeypatch.delenv("RICCATI_THREADS", raising=False)
    config = load_config("dac_bench")
    assert config.sizes == [512, 1024, 2048]
    assert config.seeds == [0] and config.threads == 1 and config.out == "results"
    assert config.solver["n_min"] == 250
    assert config.get("tests") == [1, 2, 3, 4]
    assert "tests" not in config.solver


def test_every_schema_resolves():
    for name in SCHEMA:
        assert resolve_config(name).name == name


def test_yaml_exponents(write_yaml):
    path = write_yaml("experiment: dac_bench\ncompression_tol: 1e-12\nsizes: [64]\n")
    config = load_config("dac_bench", path)
    assert config.get("compression_tol") == 1e-12
    assert config.sizes == [64]


def test_override_precedence(write_yaml, monkeypatch):
    monkeypatch.setenv("RICCATI_OUT", "from-env")
    monkeypatch.setenv("RICCATI_THREADS", "3")
    path = write_yaml("experiment: verify\nthreads: 2\n")
    config = load_config("verify", path)
    assert (config.out, config.threads) == ("from-env", 2)
    config = load_config("verify", path, {"out": "cli", "threads": 4, "seed": 7})
    assert (config.out, config.threads, config.seeds) == ("cli", 4, [7])


# ── Group 2: rejection ────────────────────────────────────────────────────────

@pytest.mark.parametrize("text", [
    "experiment: decay\nbogus: 1\n",
    "experiment: decay\nsizes: 500\n",
    "experiment: decay\nl_max: 1.5\n",
    "experiment: decay\nl_max: true\n",
    "experiment: decay\nthreads: 0\n",
    "experiment: decay\nseeds: []\n",
    "experiment: verify\n",
    "- just\n- a list\n",
])
def test_rejects_bad_files(write_yaml, text):
    with pytest.raises(ConfigError):
        load_config("decay", write_yaml(text))


def test_missing_file_and_unknown_experiment(tmp_path):
    with pytest.raises(ConfigError):
        load_config("decay", str(tmp_path / "missing.yaml"))
    with pytest.raises(ConfigError):
        resolve_config("sweep")


# ── Group 3: hashing ──────────────────────────────────────────────────────────

def test_hash_ignores_out_and_threads():
    base = resolve_config("decay", {"sizes": [100]})
    moved = resolve_config("decay", {"sizes": [100]}, {"out": "elsewhere", "threads": 8})
    changed = resolve_config("decay", {"sizes": [200]})
    assert base.config_hash == moved.config_hash
    assert base.config_hash != changed.config_hash
    assert len(base.config_hash) == 64
