"""Deep value networks: learned evaluators of structured outputs, refined by gradient ascent."""

__version__ = "1.0.0"
__description__ = "Value networks that regress task metrics and drive gradient-based inference"

from deep_value_nets.app import Application
from deep_value_nets.models.config import Config, InferenceConfig, SamplerConfig, TrainConfig

__all__ = [
    "Application",
    "Config",
    "InferenceConfig",
    "SamplerConfig",
    "TrainConfig",
    "__version__",
]
