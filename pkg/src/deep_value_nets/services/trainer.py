"""Value-network training loop, evaluation and the independent baselines."""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from deep_value_nets.core import autodiff as ad
from deep_value_nets.core.inference import infer, round_output
from deep_value_nets.core.losses import bce_with_logits_var, ce_value_loss, value_loss_var
from deep_value_nets.core.optim import Optimizer, make_optimizer
from deep_value_nets.core.oracle import aggregate_iou, mean_f1
from deep_value_nets.core.replay import ReplayBuffer, TrainingTuple
from deep_value_nets.core.rng import Rng
from deep_value_nets.core.tuples import TupleGenerator, TupleProducer
from deep_value_nets.core.value_net import (
    ConvBaseline,
    ConvValueNet,
    IndependentBaseline,
    MultiLabelBaseline,
    MultiLabelValueNet,
    NetworkParams,
    ValueNetwork,
)
from deep_value_nets.models.config import Config, InferenceConfig, SamplerConfig, TrainConfig
from deep_value_nets.models.datasets import Dataset, GridDataset, MultiLabelDataset
from deep_value_nets.utils.formats import atomic_write_text

logger = logging.getLogger(__name__)

__all__ = [
    "ce_value_loss",
    "EpochRecord",
    "NumericalError",
    "TrainReport",
    "TrainResult",
    "TrainState",
    "build_baseline",
    "build_value_network",
    "evaluate",
    "evaluate_baseline",
    "score_predictions",
    "train",
    "train_baseline",
    "train_epoch",
]

# examples per forward pass during evaluation
EVAL_CHUNK = 64


class NumericalError(ArithmeticError):
    """Loss or parameters became NaN or infinite."""


@dataclass
class TrainState:
    params: NetworkParams
    optimizer: Optimizer
    rng: Rng
    step: int = 0
    epoch: int = 0


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    train_loss: float
    tuples: int
    validation: Optional[float] = None
    wall_time: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class TrainReport:
    """Per-epoch records plus the model-selection outcome, written as JSON lines."""

    model: str
    task: str
    metric: str
    seed: int
    parameter_count: int
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_validation: Optional[float] = None
    test: Dict[str, float] = field(default_factory=dict)

    def summary(self) -> Dict[str, Any]:
        return {
            "summary": True,
            "model": self.model,
            "task": self.task,
            "metric": self.metric,
            "seed": self.seed,
            "parameter_count": self.parameter_count,
            "best_epoch": self.best_epoch,
            "best_validation": self.best_validation,
            "test": dict(sorted(self.test.items())),
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(r.to_dict(), sort_keys=True) for r in self.records]
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path: Union[str, Path]) -> None:
        atomic_write_text(path, self.to_jsonl())


@dataclass
class TrainResult:
    net: ValueNetwork
    params: NetworkParams
    report: TrainReport
    step: int


def build_value_network(config: Config, dataset: Dataset) -> ValueNetwork:
    """Value network for the configured task, sized from the data."""
    if config.task == "multilabel":
        if not isinstance(dataset, MultiLabelDataset):
            raise TypeError("multilabel task needs a MultiLabelDataset")
        net_config = config.multilabel_net.model_copy(
            update={"input_dim": dataset.n_features, "label_dim": dataset.n_labels}
        )
        return MultiLabelValueNet(net_config)
    if not isinstance(dataset, GridDataset):
        raise TypeError("grid task needs a GridDataset")
    net_config = config.grid_net
    if (net_config.height, net_config.width) != (dataset.height, dataset.width):
        net_config = net_config.model_copy(update={"height": dataset.height, "width": dataset.width})
    return ConvValueNet(net_config)


def build_baseline(config: Config, dataset: Dataset) -> IndependentBaseline:
    if config.task == "multilabel":
        return MultiLabelBaseline(dataset.n_features, dataset.n_labels, config.baseline)
    net_config = config.grid_net.model_copy(
        update={"height": dataset.height, "width": dataset.width}
    )
    return ConvBaseline(net_config)


def _split_validation(
    rng: Rng, dataset: Dataset, fraction: float
) -> Tuple[Dataset, Optional[Dataset]]:
    """Seeded hold-out of ``fraction`` of the training examples."""
    n = len(dataset)
    if fraction <= 0 or n < 2:
        return dataset, None
    n_valid = min(max(1, int(round(fraction * n))), n - 1)
    order = rng.permutation(n)
    return dataset.subset(np.sort(order[n_valid:])), dataset.subset(np.sort(order[:n_valid]))


def random_crop(rng: Rng, x: np.ndarray, y: np.ndarray, pad: int) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-pad images and masks by ``pad`` and crop both back at one random offset."""
    batch, height, width = y.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    yp = np.pad(y, ((0, 0), (pad, pad), (pad, pad)))
    offsets = rng.integers(0, 2 * pad + 1, size=(batch, 2))
    xc = np.empty_like(x)
    yc = np.empty_like(y)
    for i, (top, left) in enumerate(offsets):
        xc[i] = xp[i, top : top + height, left : left + width]
        yc[i] = yp[i, top : top + height, left : left + width]
    return xc, yc


def value_loss_and_grads(
    net: ValueNetwork,
    params: NetworkParams,
    batch: List[TrainingTuple],
    value_loss: str,
    rng: Optional[Rng] = None,
    mode: str = "train",
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean regression loss over a tuple batch and its gradient in theta."""
    x = np.stack([t.x for t in batch])
    y = np.stack([t.y for t in batch])
    v_star = np.array([t.v_star for t in batch])
    tape = ad.Tape()
    bound = net.bind(tape, params, requires_grad=True)
    v, _ = net.forward(bound, x, tape.constant(y), mode, rng)
    loss = ad.mean(value_loss_var(value_loss, v, v_star))
    grads = tape.backward(loss)
    return float(loss.value), {name: grads[var.index] for name, var in bound.items()}


def _check_finite(loss: float, state: TrainState) -> None:
    if not np.isfinite(loss):
        raise NumericalError(
            f"non-finite loss {loss} at epoch {state.epoch}, step {state.step}; "
            "try a smaller learning rate"
        )


def train_epoch(
    state: TrainState,
    net: ValueNetwork,
    generator: Optional[TupleGenerator],
    buffer: ReplayBuffer,
    dataset: Dataset,
    config: TrainConfig,
    phase: str = "train",
) -> EpochRecord:
    """One pass over ``dataset``: generate tuples, store them, regress a replayed batch.

    Examples are visited in a seeded order, ``batch_size`` at a time. Each
    visit pushes the generated tuples into ``buffer`` and takes one update
    on a batch sampled from it. With no ``generator`` the buffer is filled
    by a background producer.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    started = time.perf_counter()
    state.epoch += 1
    order = state.rng.permutation(len(dataset))
    losses: List[float] = []
    produced = 0
    grid = isinstance(dataset, GridDataset)

    for start in range(0, len(order), config.batch_size):
        rows = order[start : start + config.batch_size]
        x, ystar = dataset.inputs(rows), dataset.targets(rows)
        if grid and config.augment_crop:
            x, ystar = random_crop(state.rng, x, ystar, config.augment_crop)
        if generator is not None:
            tuples = generator.generate(state.params, state.rng, x, ystar)
            buffer.push(tuples)
            produced += len(tuples)

        batch = buffer.sample(state.rng, config.batch_size)
        loss, grads = value_loss_and_grads(net, state.params, batch, config.value_loss, state.rng)
        _check_finite(loss, state)
        state.params = state.optimizer.step(state.params, grads)
        state.step += 1
        losses.append(loss)

    if not state.params.all_finite():
        raise NumericalError(f"parameters became non-finite during epoch {state.epoch}")
    record = EpochRecord(state.epoch, phase, float(np.mean(losses)), produced)
    if config.report_timing:
        record.wall_time = round(time.perf_counter() - started, 3)
    logger.info(
        f"[{phase}] epoch {state.epoch}: loss {record.train_loss:.4f}, {produced} tuples, "
        f"buffer {len(buffer)}"
    )
    return record


def score_predictions(
    predictions: np.ndarray, targets: np.ndarray, task: str, protrusions: Optional[np.ndarray] = None
) -> Dict[str, float]:
    """Discrete metrics of binary predictions: F1 for label sets, mean/global IOU for masks."""
    if len(targets) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if task == "multilabel":
        return {"f1": mean_f1(list(predictions), list(targets))}
    scores = {
        "mean_iou": aggregate_iou(list(predictions), list(targets), "mean"),
        "global_iou": aggregate_iou(list(predictions), list(targets), "global"),
    }
    if protrusions is not None and np.any(protrusions):
        # inside the protrusion region the ground truth is all ones
        hit = np.sum(predictions * protrusions)
        scores["protrusion_iou"] = float(hit / np.sum(protrusions))
    return scores


def primary_metric(task: str) -> str:
    return "f1" if task == "multilabel" else "mean_iou"


def _task_of(dataset: Dataset) -> str:
    return "grid" if isinstance(dataset, GridDataset) else "multilabel"


def predict(
    net: ValueNetwork,
    params: NetworkParams,
    dataset: Dataset,
    inference: InferenceConfig,
    rng: Optional[Rng] = None,
) -> np.ndarray:
    """Rounded inference outputs for every example.

    ``rng`` draws uniform starting points; without one a fixed seed is used
    so repeated evaluations agree.
    """
    rng = rng if rng is not None else Rng(0)
    outputs = []
    for start in range(0, len(dataset), EVAL_CHUNK):
        rows = np.arange(start, min(start + EVAL_CHUNK, len(dataset)))
        result = infer(net, params, dataset.inputs(rows), inference, rng=rng)
        outputs.append(round_output(result.y, inference.threshold))
    return np.concatenate(outputs)


def evaluate(
    net: ValueNetwork,
    params: NetworkParams,
    dataset: Dataset,
    inference: Optional[InferenceConfig] = None,
    rng: Optional[Rng] = None,
) -> Dict[str, float]:
    """Infer, round and score every example."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    inference = inference or InferenceConfig()
    predictions = predict(net, params, dataset, inference, rng)
    protrusions = getattr(dataset, "protrusions", None)
    return score_predictions(predictions, dataset.targets(), _task_of(dataset), protrusions)


def evaluate_baseline(
    baseline: IndependentBaseline, params: NetworkParams, dataset: Dataset, threshold: float = 0.5
) -> Dict[str, float]:
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    probabilities = np.concatenate(
        [
            baseline.probabilities(params, dataset.inputs(np.arange(s, min(s + EVAL_CHUNK, len(dataset)))))
            for s in range(0, len(dataset), EVAL_CHUNK)
        ]
    )
    predictions = round_output(probabilities, threshold)
    protrusions = getattr(dataset, "protrusions", None)
    return score_predictions(predictions, dataset.targets(), _task_of(dataset), protrusions)


def _without_inference(sampler: SamplerConfig) -> Optional[SamplerConfig]:
    """The sampler minus inference tuples, or None when nothing else remains."""
    weights = {k: w for k, w in sampler.weights().items() if k != "inference" and w > 0}
    if not weights:
        return None
    return sampler.model_copy(update={"strategy": "mixture", "mixture": weights})


def train(
    config: Config,
    train_set: Dataset,
    valid_set: Optional[Dataset] = None,
    test_set: Optional[Dataset] = None,
) -> TrainResult:
    """Train a value network with validation-driven model selection.

    Without ``valid_set`` a seeded fraction of ``train_set`` is held out.
    The parameters with the best validation metric are kept; with
    ``finetune_epochs`` they are then trained further on train plus
    validation.

    Inference during validation and test starts from a seed derived from
    ``training.seed``. An exception in the background producer is raised
    here once the producer has stopped.
    """
    tc = config.training
    rng = Rng(tc.seed)
    data_rng, init_rng, loop_rng, producer_rng = rng.split(), rng.split(), rng.split(), rng.split()
    eval_seed = int(rng.split().integers(0, 2**31))
    if valid_set is None:
        train_set, valid_set = _split_validation(data_rng, train_set, tc.validation_fraction)

    net = build_value_network(config, train_set)
    logger.info(f"Value network ({net.kind}) with {net.parameter_count()} parameters")
    optimizer = make_optimizer(tc.optimizer, tc.learning_rate, tc.momentum)
    state = TrainState(net.init_params(init_rng), optimizer, loop_rng)
    buffer = ReplayBuffer(tc.sampler.replay_capacity)
    metric_name = primary_metric(config.task)
    report = TrainReport("value", config.task, metric_name, tc.seed, net.parameter_count())

    full_generator = TupleGenerator(net, tc.sampler, tc.inference, config.metric, tc.value_loss)
    generator: Optional[TupleGenerator] = full_generator
    producer: Optional[TupleProducer] = None
    if tc.concurrent_producer and "inference" in tc.sampler.weights():
        producer = TupleProducer(
            full_generator, buffer, train_set.inputs(), train_set.targets(), producer_rng
        )
        remaining = _without_inference(tc.sampler)
        generator = None
        if remaining is not None:
            generator = TupleGenerator(net, remaining, tc.inference, config.metric, tc.value_loss)
        producer.update_snapshot(state.params)
        producer.start()

    best_params = state.params.copy()
    since_best = 0
    try:
        if producer is not None:
            producer.wait_for_tuples()
        for _ in range(tc.epochs):
            record = train_epoch(state, net, generator, buffer, train_set, tc)
            if producer is not None:
                producer.check()
                producer.update_snapshot(state.params)
            if valid_set is not None and state.epoch % tc.eval_every == 0:
                record.validation = evaluate(
                    net, state.params, valid_set, tc.inference, Rng(eval_seed)
                )[metric_name]
                logger.info(f"epoch {state.epoch}: validation {metric_name} {record.validation:.4f}")
                if report.best_validation is None or record.validation > report.best_validation:
                    report.best_validation = record.validation
                    report.best_epoch = state.epoch
                    best_params = state.params.copy()
                    since_best = 0
                else:
                    since_best += 1
            report.records.append(record)
            if since_best >= tc.patience:
                logger.warning(
                    f"Stopping early at epoch {state.epoch}: "
                    f"no improvement in {tc.patience} evaluations"
                )
                break
    finally:
        if producer is not None:
            producer.stop()
    if producer is not None:
        producer.check()

    if report.best_epoch is None:
        best_params = state.params.copy()
        report.best_epoch = state.epoch

    state.params = best_params
    if tc.finetune_epochs and valid_set is not None:
        combined = train_set.concat(valid_set)
        for _ in range(tc.finetune_epochs):
            report.records.append(
                train_epoch(state, net, full_generator, buffer, combined, tc, phase="finetune")
            )

    if test_set is not None:
        report.test = evaluate(net, state.params, test_set, tc.inference, Rng(eval_seed))
        logger.info(f"Test metrics: {report.test}")
    return TrainResult(net, state.params, report, state.step)


def train_baseline(
    config: Config,
    train_set: Dataset,
    valid_set: Optional[Dataset] = None,
    test_set: Optional[Dataset] = None,
) -> Tuple[IndependentBaseline, NetworkParams, TrainReport]:
    """Independent per-dimension predictor trained with cross-entropy on y*."""
    tc = config.training
    rng = Rng(tc.seed)
    data_rng, init_rng, loop_rng = rng.split(), rng.split(), rng.split()
    if valid_set is None:
        train_set, valid_set = _split_validation(data_rng, train_set, tc.validation_fraction)

    baseline = build_baseline(config, train_set)
    params = baseline.init_params(init_rng)
    optimizer = make_optimizer(tc.optimizer, config.baseline.learning_rate, tc.momentum)
    metric_name = primary_metric(config.task)
    report = TrainReport("baseline", config.task, metric_name, tc.seed, params.count())
    logger.info(f"Independent baseline with {params.count()} parameters")

    best_params = params
    for epoch in range(1, config.baseline.epochs + 1):
        started = time.perf_counter()
        order = loop_rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), tc.batch_size):
            rows = order[start : start + tc.batch_size]
            x, ystar = train_set.inputs(rows), train_set.targets(rows)
            if isinstance(train_set, GridDataset) and tc.augment_crop:
                x, ystar = random_crop(loop_rng, x, ystar, tc.augment_crop)
            tape = ad.Tape()
            bound = baseline.bind(tape, params, requires_grad=True)
            loss = ad.mean(bce_with_logits_var(baseline.logits(bound, x), ystar))
            if not np.isfinite(loss.value):
                raise NumericalError(f"non-finite baseline loss at epoch {epoch}")
            grads = tape.backward(loss)
            params = optimizer.step(params, {name: grads[var.index] for name, var in bound.items()})
            losses.append(float(loss.value))

        record = EpochRecord(epoch, "baseline", float(np.mean(losses)), 0)
        if tc.report_timing:
            record.wall_time = round(time.perf_counter() - started, 3)
        if valid_set is not None:
            record.validation = evaluate_baseline(baseline, params, valid_set)[metric_name]
            if report.best_validation is None or record.validation > report.best_validation:
                report.best_validation = record.validation
                report.best_epoch = epoch
                best_params = params
        logger.info(f"[baseline] epoch {epoch}: loss {record.train_loss:.4f}")
        report.records.append(record)

    if report.best_epoch is None:
        best_params = params
    if test_set is not None:
        report.test = evaluate_baseline(baseline, best_params, test_set)
        logger.info(f"Baseline test metrics: {report.test}")
    return baseline, best_params, report
