"""Tests for configuration loading."""

import tempfile
from pathlib import Path

import pytest

from deep_value_nets.models.config import (
    Config,
    ConfigError,
    SamplerConfig,
    build_config,
    default_config_path,
    load_config,
    parse_overrides,
)

CONFIG_DIR = Path(__file__).parent.parent / "configs"


def test_config_defaults():
    """Test the default configuration."""
    config = Config()
    assert config.task == "grid"
    assert config.metric == "iou"
    assert config.training.inference.steps == 30
    assert config.training.value_loss == "ce"
    assert config.data.synthetic.kind == "shapes"


def test_metric_follows_task_unless_set():
    """Test that the oracle metric defaults by task."""
    assert build_config({"task": "multilabel", "data": {"synthetic": {"kind": "multilabel"}}}).metric == "f1"
    config = build_config({"training": {"oracle_metric": "f1"}})
    assert config.metric == "f1"


def test_load_config():
    """Test loading configuration from YAML."""
    config_yaml = """
task: multilabel
data:
  synthetic:
    kind: multilabel
    n_labels: 8
training:
  epochs: 4
  sampler:
    strategy: stratified
    tau: 0.1
"""

    with tempfile.NamedTemporaryFile(mode="w", suffix=".yaml", delete=False) as f:
        f.write(config_yaml)
        config_path = Path(f.name)

    try:
        config = load_config(config_path, ["training.epochs=7"])

        assert config.task == "multilabel"
        assert config.data.synthetic.n_labels == 8
        assert config.training.epochs == 7
        assert config.training.sampler.weights() == {"stratified": 1.0}
        assert config.training.sampler.tau == 0.1

    finally:
        config_path.unlink()


def test_load_flat_config():
    """Test loading the key=value form."""
    with tempfile.NamedTemporaryFile(mode="w", suffix=".conf", delete=False) as f:
        f.write("# comment\ntask = multilabel\ndata.train_path = a.txt\ntraining.epochs = 2\n")
        config_path = Path(f.name)

    try:
        config = load_config(config_path)
        assert config.data.train_path == "a.txt"
        assert config.training.epochs == 2
    finally:
        config_path.unlink()


def test_load_config_file_not_found():
    """Test loading configuration from non-existent file."""
    with pytest.raises(FileNotFoundError):
        load_config(Path("/nonexistent/config.yaml"))


def test_load_config_rejects_undecodable_file(tmp_path):
    """Test that a file with invalid UTF-8 is a configuration error."""
    for name in ("bad.yaml", "bad.env"):
        path = tmp_path / name
        path.write_bytes(b"task: multilabel\n\xff\n")
        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert "UTF-8" in excinfo.value.errors[0]


def test_training_rejects_provided_start():
    """Test that training inference cannot ask for a caller-provided start."""
    with pytest.raises(ConfigError) as excinfo:
        build_config({"training": {"inference": {"init": "provided"}}})
    assert "training.inference" in excinfo.value.errors[0]
    config = build_config({"training": {"inference": {"init": "uniform"}}})
    assert config.training.inference.init == "uniform"


def test_validation_errors_list_every_field():
    """Test that every violation is reported at once."""
    with pytest.raises(ConfigError) as excinfo:
        build_config(
            {"training": {"learning_rate": 0, "inference": {"steps": 0}}, "output": "x"}
        )
    errors = "\n".join(excinfo.value.errors)
    assert "training.learning_rate" in errors
    assert "training.inference.steps" in errors
    assert "output" in errors


def test_mixture_validation():
    """Test mixture weight checks."""
    with pytest.raises(ValueError):
        SamplerConfig(mixture={"beam": 1.0})
    with pytest.raises(ValueError):
        SamplerConfig(mixture={"inference": -1.0, "adversarial": 2.0})
    with pytest.raises(ValueError):
        SamplerConfig(mixture={"inference": 0.0})


def test_overrides_parse_yaml_scalars():
    """Test dotted override parsing."""
    assert parse_overrides(["a.b=3", "c=[1, 2]", "d=true", "e=adam"]) == {
        "a.b": 3,
        "c": [1, 2],
        "d": True,
        "e": "adam",
    }
    with pytest.raises(ConfigError):
        parse_overrides(["no-equals-sign"])


def test_flat_view_is_sorted():
    """Test the dotted effective configuration."""
    flat = Config().flat()
    assert list(flat) == sorted(flat)
    assert flat["training.inference.step_size"] == 4.0
    assert isinstance(flat["training.sampler.mixture"], dict)


def test_shipped_configs_validate():
    """Test that the example configurations load."""
    for path in sorted(CONFIG_DIR.iterdir()):
        config = load_config(path)
        assert config.output_dir.startswith("runs/")


def test_default_config_path(monkeypatch):
    """Test the DVN_CONFIG environment variable."""
    monkeypatch.delenv("DVN_CONFIG", raising=False)
    assert default_config_path() is None
    monkeypatch.setenv("DVN_CONFIG", "/tmp/dvn.yaml")
    assert default_config_path() == Path("/tmp/dvn.yaml")
