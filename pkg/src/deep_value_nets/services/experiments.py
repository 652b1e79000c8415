"""Experiment drivers: dataset assembly, the tuple-strategy ablation and prior visualization."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from deep_value_nets.core.inference import round_output, visualize_prior
from deep_value_nets.core.rng import Rng
from deep_value_nets.core.synthetic import gen_synthetic_multilabel, gen_synthetic_shapes
from deep_value_nets.core.value_net import NetworkParams, ValueNetwork
from deep_value_nets.models.config import Config, ConfigError, InferenceConfig
from deep_value_nets.models.datasets import Dataset, GridDataset
from deep_value_nets.services.trainer import primary_metric, train
from deep_value_nets.utils.formats import load_grid_dataset, load_multilabel, write_pbm, write_pgm

logger = logging.getLogger(__name__)

# ordered weakest to strongest; each adds one tuple source to inference
ABLATION_MIXTURES: Dict[str, Dict[str, float]] = {
    "inference + ground truth": {"inference": 1.0, "ground_truth": 1.0},
    "inference + stratified": {"inference": 1.0, "stratified": 1.0},
    "inference + adversarial": {"inference": 1.0, "adversarial": 1.0},
}


class DataSplits(NamedTuple):
    train: Dataset
    valid: Optional[Dataset]
    test: Optional[Dataset]


def _load(task: str, path: str) -> Dataset:
    if task == "multilabel":
        return load_multilabel(path)
    return load_grid_dataset(path)


def load_datasets(config: Config) -> DataSplits:
    """Datasets named by ``config.data``: files when given, otherwise synthetic."""
    data = config.data
    if data.train_path:
        return DataSplits(
            _load(config.task, data.train_path),
            _load(config.task, data.valid_path) if data.valid_path else None,
            _load(config.task, data.test_path) if data.test_path else None,
        )

    synth = data.synthetic
    expected = "multilabel" if config.task == "multilabel" else "shapes"
    if synth.kind != expected:
        raise ConfigError([f"data.synthetic.kind: '{synth.kind}' does not fit task '{config.task}'"])
    rng = Rng(synth.seed)
    if synth.kind == "multilabel":
        train_set, generator = gen_synthetic_multilabel(
            rng, synth.n_train, synth.n_features, synth.n_labels, synth.correlation
        )
        test_set, _ = gen_synthetic_multilabel(
            rng, synth.n_test, synth.n_features, synth.n_labels, synth.correlation, generator
        )
    else:
        train_set = gen_synthetic_shapes(
            rng, synth.n_train, synth.height, synth.width, synth.shape, synth.noise,
            synth.attenuate_protrusions,
        )
        test_set = gen_synthetic_shapes(
            rng, synth.n_test, synth.height, synth.width, synth.shape, synth.noise,
            synth.attenuate_protrusions,
        )
    logger.info(f"Synthetic {synth.kind} data: {len(train_set)} train, {len(test_set)} test")
    return DataSplits(train_set, None, test_set)


@dataclass
class AblationRow:
    name: str
    mixture: Dict[str, float]
    metrics: Dict[str, float]

    def render(self, metric: str) -> str:
        return f"{self.name:<28} {100.0 * self.metrics[metric]:6.2f}"


def run_ablation(config: Config, splits: DataSplits) -> List[AblationRow]:
    """Train one value network per tuple mixture on identical data and seed.

    Rows come back weakest mixture first; the test metric of each row is
    what the comparison is read from.
    """
    evaluation = splits.test if splits.test is not None else splits.valid
    if evaluation is None:
        raise ValueError("ablation needs a test or validation split")
    rows: List[AblationRow] = []
    for name, mixture in ABLATION_MIXTURES.items():
        sampler = config.training.sampler.model_copy(
            update={"strategy": "mixture", "mixture": mixture}
        )
        variant = config.model_copy(
            update={"training": config.training.model_copy(update={"sampler": sampler})}
        )
        logger.info(f"Ablation: training with {name}")
        result = train(variant, splits.train, splits.valid, evaluation)
        rows.append(AblationRow(name, mixture, result.report.test))
    metric = primary_metric(config.task)
    values = [row.metrics[metric] for row in rows]
    if values != sorted(values):
        logger.warning(f"Ablation {metric} is not ordered weakest to strongest: {values}")
    return rows


@dataclass
class PriorPanel:
    """Mean mask of the training set next to masks inferred from the noisy mean image."""

    mean_image: np.ndarray
    mean_mask: np.ndarray
    relaxed: List[np.ndarray]
    rounded: List[np.ndarray]


def prior_panel(
    net: ValueNetwork,
    params: NetworkParams,
    dataset: GridDataset,
    noise_sigma: float,
    rng: Rng,
    inference: InferenceConfig,
    samples: int = 1,
) -> PriorPanel:
    """Inference from the dataset's mean image, repeated with fresh noise ``samples`` times."""
    if samples < 1:
        raise ValueError(f"samples must be positive, got {samples}")
    mean_image = dataset.mean_image()
    relaxed = [
        visualize_prior(net, params, mean_image, noise_sigma, rng, inference) for _ in range(samples)
    ]
    rounded = [round_output(y, inference.threshold) for y in relaxed]
    return PriorPanel(mean_image, dataset.mean_mask(), relaxed, rounded)


def write_prior_panel(directory: Path, panel: PriorPanel) -> List[Path]:
    directory = Path(directory)
    written = [directory / "mean_image.pgm", directory / "mean_mask.pgm"]
    write_pgm(written[0], panel.mean_image)
    write_pgm(written[1], panel.mean_mask)
    for i, (soft, hard) in enumerate(zip(panel.relaxed, panel.rounded)):
        soft_path = directory / f"prior_{i:03d}_soft.pgm"
        hard_path = directory / f"prior_{i:03d}.pbm"
        write_pgm(soft_path, soft)
        write_pbm(hard_path, hard)
        written.extend([soft_path, hard_path])
    return written


def ablation_table(rows: List[AblationRow], metric: str) -> Tuple[str, ...]:
    header = f"{'mixture':<28} {metric:>6}"
    return (header, *(row.render(metric) for row in rows))
