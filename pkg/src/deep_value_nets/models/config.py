"""Configuration models."""

import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

STRATEGIES = ("ground_truth", "inference", "stratified", "adversarial")


class ConfigError(ValueError):
    """Configuration failed validation; ``errors`` lists every violated field."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class InferenceConfig(_Section):
    """Projected gradient ascent on y."""

    steps: int = Field(30, ge=1)
    step_size: float = Field(4.0, gt=0)
    init: Literal["zeros", "uniform", "provided"] = "zeros"
    record_trajectory: bool = False
    # ascend on the sigmoid output or on its logit
    ascend_on: Literal["value", "logit"] = "value"
    threshold: float = Field(0.5, gt=0, lt=1)


class SamplerConfig(_Section):
    """Training-tuple generation."""

    strategy: Literal["ground_truth", "inference", "stratified", "adversarial", "mixture"] = (
        "mixture"
    )
    # expected number of tuples per training example for each strategy
    mixture: Dict[str, float] = Field(
        default_factory=lambda: {"inference": 1.0, "adversarial": 1.0, "ground_truth": 0.2}
    )
    tau: float = Field(0.05, gt=0)
    n_candidates: int = Field(32, ge=1)
    n_value_buckets: int = Field(10, ge=1)
    corruption: Literal["auto", "flip", "blend"] = "auto"
    inference_stride: int = Field(10, ge=1)
    adversarial_steps: int = Field(10, ge=1)
    adversarial_step_size: float = Field(1.0, gt=0)
    adversarial_init: Literal["uniform", "ground_truth"] = "uniform"
    freeze_oracle: bool = False
    replay_capacity: int = Field(10000, ge=1)

    @field_validator("mixture")
    @classmethod
    def _check_mixture(cls, weights: Dict[str, float]) -> Dict[str, float]:
        unknown = sorted(set(weights) - set(STRATEGIES))
        if unknown:
            raise ValueError(f"unknown strategies {unknown}, expected a subset of {STRATEGIES}")
        if any(w < 0 for w in weights.values()):
            raise ValueError("mixture weights must be nonnegative")
        if sum(weights.values()) <= 0:
            raise ValueError("mixture weights must have a positive sum")
        return weights

    def weights(self) -> Dict[str, float]:
        """Strategy weights, a single strategy counting as weight 1."""
        if self.strategy == "mixture":
            return dict(self.mixture)
        return {self.strategy: 1.0}


class TrainConfig(_Section):
    """Value-network training."""

    learning_rate: float = Field(0.01, gt=0)
    optimizer: Literal["sgd", "adam"] = "adam"
    momentum: float = Field(0.0, ge=0, lt=1)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(50, ge=1)
    eval_every: int = Field(1, ge=1)
    patience: int = Field(20, ge=1)
    seed: int = 0
    validation_fraction: float = Field(0.1, ge=0, lt=1)
    finetune_epochs: int = Field(0, ge=0)
    value_loss: Literal["ce", "l2"] = "ce"
    oracle_metric: Optional[Literal["f1", "iou"]] = None
    augment_crop: int = Field(0, ge=0)
    concurrent_producer: bool = False
    report_timing: bool = False
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    inference: InferenceConfig = Field(default_factory=InferenceConfig)

    @field_validator("inference")
    @classmethod
    def _no_provided_start(cls, inference: InferenceConfig) -> InferenceConfig:
        if inference.init == "provided":
            raise ValueError("init 'provided' has no starting point during training or evaluation")
        return inference


class MultiLabelValueNetConfig(_Section):
    """Local (linear in y) plus global (label-only) value network."""

    input_dim: Optional[int] = Field(None, ge=1)
    label_dim: Optional[int] = Field(None, ge=1)
    local_hidden: List[int] = Field(default_factory=lambda: [150])
    global_hidden: List[int] = Field(default_factory=lambda: [16])
    nonlinearity: Literal["softplus"] = "softplus"
    use_global: bool = True

    @field_validator("local_hidden", "global_hidden")
    @classmethod
    def _one_or_two_layers(cls, widths: List[int]) -> List[int]:
        if not 1 <= len(widths) <= 2:
            raise ValueError("needs one or two hidden layers")
        if any(w < 1 for w in widths):
            raise ValueError("layer widths must be positive")
        return widths


class ConvSpec(_Section):
    kernel: int = Field(..., ge=1)
    in_ch: int = Field(..., ge=1)
    out_ch: int = Field(..., ge=1)
    stride: int = Field(1, ge=1)


def _default_conv_specs() -> List[ConvSpec]:
    return [
        ConvSpec(kernel=5, in_ch=2, out_ch=64, stride=1),
        ConvSpec(kernel=5, in_ch=64, out_ch=128, stride=2),
        ConvSpec(kernel=5, in_ch=128, out_ch=128, stride=2),
    ]


class ConvValueNetConfig(_Section):
    """Three convolutions and two fully connected layers over image plus mask."""

    height: int = Field(32, ge=1)
    width: int = Field(32, ge=1)
    channels: int = Field(1, ge=1)
    conv_specs: List[ConvSpec] = Field(default_factory=_default_conv_specs)
    fc_widths: List[int] = Field(default_factory=lambda: [384, 192])
    dropout_keep: float = Field(0.75, gt=0, le=1)

    @model_validator(mode="after")
    def _check_layers(self) -> "ConvValueNetConfig":
        if len(self.conv_specs) != 3:
            raise ValueError("needs exactly 3 convolutional layers")
        if len(self.fc_widths) != 2 or any(w < 1 for w in self.fc_widths):
            raise ValueError("needs exactly 2 fully connected layers with positive widths")
        expected = self.channels + 1
        for i, spec in enumerate(self.conv_specs):
            if spec.in_ch != expected:
                raise ValueError(
                    f"conv_specs[{i}].in_ch is {spec.in_ch}, expected {expected} from the previous layer"
                )
            expected = spec.out_ch
        return self


class BaselineConfig(_Section):
    """Independent per-dimension baseline."""

    hidden: List[int] = Field(default_factory=lambda: [150])
    epochs: int = Field(30, ge=0)
    learning_rate: float = Field(0.01, gt=0)


class SyntheticConfig(_Section):
    kind: Literal["multilabel", "shapes"] = "shapes"
    n_train: int = Field(300, ge=1)
    n_test: int = Field(100, ge=1)
    seed: int = 0
    n_features: int = Field(64, ge=1)
    n_labels: int = Field(16, ge=1)
    correlation: Literal["none", "implication-chain", "block-xor"] = "implication-chain"
    height: int = Field(16, ge=4)
    width: int = Field(16, ge=4)
    shape: Literal["bar", "blob", "horse"] = "horse"
    noise: float = Field(0.1, ge=0)
    attenuate_protrusions: bool = True


class DataConfig(_Section):
    train_path: Optional[str] = None
    valid_path: Optional[str] = None
    test_path: Optional[str] = None
    synthetic: Optional[SyntheticConfig] = None

    @model_validator(mode="after")
    def _has_source(self) -> "DataConfig":
        if self.train_path is None and self.synthetic is None:
            raise ValueError("set train_path or a synthetic section")
        return self


class LoggingConfig(_Section):
    level: Literal["DEBUG", "INFO", "WARN", "WARNING", "ERROR"] = "INFO"
    file: Optional[str] = None


class Config(_Section):
    """Main configuration."""

    task: Literal["multilabel", "grid"] = "grid"
    data: DataConfig = Field(
        default_factory=lambda: DataConfig(synthetic=SyntheticConfig())
    )
    multilabel_net: MultiLabelValueNetConfig = Field(default_factory=MultiLabelValueNetConfig)
    grid_net: ConvValueNetConfig = Field(default_factory=ConvValueNetConfig)
    baseline: BaselineConfig = Field(default_factory=BaselineConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    output_dir: str = "runs/dvn"

    @property
    def metric(self) -> str:
        """Oracle metric used for training tuples."""
        if self.training.oracle_metric:
            return self.training.oracle_metric
        return "f1" if self.task == "multilabel" else "iou"

    def flat(self) -> Dict[str, Any]:
        """Effective configuration as sorted dotted keys."""
        return dict(sorted(_flatten(self.model_dump(mode="json")).items()))


def _flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict) and value and key != "mixture":
            flat.update(_flatten(value, f"{path}."))
        else:
            flat[path] = value
    return flat


def _assign(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def _nest(data: Dict[str, Any]) -> Dict[str, Any]:
    """Expand dotted keys at any level into nested mappings."""
    tree: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict):
            value = _nest(value)
        if isinstance(value, dict) and isinstance(tree.get(key), dict):
            tree[key].update(value)
        else:
            _assign(tree, str(key), value)
    return tree


def _parse_key_values(text: str, source: str) -> Dict[str, Any]:
    data: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError([f"{source}:{number}: expected key=value, got '{raw.strip()}'"])
        key, value = (part.strip() for part in line.split("=", 1))
        data[key] = yaml.safe_load(value) if value else None
    return data


def parse_overrides(overrides: Sequence[str]) -> Dict[str, Any]:
    """Parse ``dotted.path=value`` strings, values read as YAML scalars."""
    return _parse_key_values("\n".join(overrides), "--set")


def build_config(data: Optional[Dict[str, Any]] = None, overrides: Sequence[str] = ()) -> Config:
    """Validate raw configuration data plus dotted overrides."""
    tree = _nest(dict(data or {}))
    for key, value in parse_overrides(overrides).items():
        _assign(tree, key, value)
    try:
        return Config.model_validate(tree)
    except ValidationError as e:
        raise ConfigError(
            [
                f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}"
                for err in e.errors()
            ]
        ) from None


def load_config(config_path: Path, overrides: Sequence[str] = ()) -> Config:
    """Load configuration from a YAML or flat key=value file."""
    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    try:
        text = config_path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConfigError([f"{config_path}: not UTF-8 text ({e.reason} at byte {e.start})"]) from None
    if config_path.suffix.lower() in (".yaml", ".yml"):
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError([f"{config_path}: {e}"]) from None
        if not isinstance(data, dict):
            raise ConfigError([f"{config_path}: top level must be a mapping"])
    else:
        data = _parse_key_values(text, str(config_path))

    return build_config(data, overrides)


def default_config_path() -> Optional[Path]:
    """Config path from ``DVN_CONFIG`` when set."""
    value = os.getenv("DVN_CONFIG")
    return Path(value) if value else None
