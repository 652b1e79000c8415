"""Configuration and dataset models."""

from deep_value_nets.models.config import Config, ConfigError, load_config
from deep_value_nets.models.datasets import DataFormatError, GridDataset, MultiLabelDataset

__all__ = [
    "Config",
    "ConfigError",
    "DataFormatError",
    "GridDataset",
    "MultiLabelDataset",
    "load_config",
]
