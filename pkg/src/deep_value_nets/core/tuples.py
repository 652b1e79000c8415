"""Training-tuple generation: ground truth, inference, stratified and adversarial.

Every emitted tuple carries the true oracle value of its output, so
recomputing v*(y, y*) reproduces ``v_star``.
"""

import logging
import threading
import time
from typing import Callable, Dict, List, Optional

import numpy as np

from deep_value_nets.core import autodiff as ad
from deep_value_nets.core.inference import infer, project
from deep_value_nets.core.losses import value_loss_var
from deep_value_nets.core.oracle import relaxed_value_batch, relaxed_value_var
from deep_value_nets.core.replay import ReplayBuffer, TrainingTuple
from deep_value_nets.core.rng import Rng
from deep_value_nets.models.config import STRATEGIES, InferenceConfig, SamplerConfig

logger = logging.getLogger(__name__)


def _emit(metric: str, x: np.ndarray, y: np.ndarray, ystar: np.ndarray) -> List[TrainingTuple]:
    values = relaxed_value_batch(metric, y, ystar)
    return [TrainingTuple(x[i].copy(), y[i].copy(), float(values[i])) for i in range(len(values))]


def corrupt_candidates(rng: Rng, ystar: np.ndarray, count: int, mode: str) -> np.ndarray:
    """Candidate pool around y*: y* itself plus ``count - 1`` corruptions.

    Each corruption draws a level u ~ U[0, 1] and changes round(u * M)
    dimensions, flipping them (``flip``) or replacing them with uniform
    values (``blend``).
    """
    flat = np.asarray(ystar, dtype=np.float64).ravel()
    size = flat.size
    pool = np.empty((count, size))
    pool[0] = flat
    for k in range(1, count):
        level = float(rng.uniform())
        dims = rng.permutation(size)[: int(round(level * size))]
        candidate = flat.copy()
        if mode == "flip":
            candidate[dims] = 1.0 - candidate[dims]
        else:
            candidate[dims] = rng.uniform(len(dims))
        pool[k] = candidate
    return pool.reshape((count, *np.shape(ystar)))


def stratified_select(rng: Rng, values: np.ndarray, tau: float, n_buckets: int) -> int:
    """Pick a candidate index, favouring high values by exp(v / tau).

    Candidates are grouped into equal-width value buckets. A bucket is drawn
    with probability proportional to the summed exp(v / tau) of its members,
    then a member uniformly within it.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("stratified sampling needs a non-empty candidate pool")
    buckets = np.minimum((values * n_buckets).astype(int), n_buckets - 1)
    mass = np.exp((values - values.max()) / tau)
    bucket_mass = np.bincount(buckets, weights=mass, minlength=n_buckets)
    bucket = int(rng.categorical(bucket_mass))
    members = np.flatnonzero(buckets == bucket)
    return int(members[int(rng.integers(0, members.size))])


class TupleGenerator:
    """Produces (x, y, v*) tuples for a batch of training examples."""

    def __init__(
        self,
        net,
        sampler: SamplerConfig,
        inference: InferenceConfig,
        metric: str,
        value_loss: str = "ce",
    ):
        self.net = net
        self.sampler = sampler
        self.inference_config = inference.model_copy(update={"record_trajectory": True})
        self.metric = metric
        self.value_loss = value_loss
        self._strategies: Dict[str, Callable[..., List[TrainingTuple]]] = {
            "ground_truth": lambda params, rng, x, ystar: self.ground_truth(x, ystar),
            "inference": lambda params, rng, x, ystar: self.inference(params, x, ystar, rng),
            "stratified": lambda params, rng, x, ystar: self.stratified(rng, x, ystar),
            "adversarial": self.adversarial,
        }

    def ground_truth(self, x: np.ndarray, ystar: np.ndarray) -> List[TrainingTuple]:
        """y* itself, valued 1."""
        return _emit(self.metric, x, np.asarray(ystar, dtype=np.float64), ystar)

    def inference(
        self, params, x: np.ndarray, ystar: np.ndarray, rng: Optional[Rng] = None
    ) -> List[TrainingTuple]:
        """Points along the inference trajectory: every k-th step and the last one.

        A point identical to the previously emitted one for the same example
        is skipped.
        """
        result = infer(self.net, params, x, self.inference_config, rng=rng)
        steps = self.inference_config.steps
        stride = self.sampler.inference_stride
        selected = sorted(set(range(0, steps + 1, stride)) | {steps})
        points = [result.trajectory.points[s] for s in selected]

        tuples: List[TrainingTuple] = []
        for i in range(x.shape[0]):
            previous: Optional[np.ndarray] = None
            for point in points:
                y = point.y[i]
                if previous is not None and np.array_equal(y, previous):
                    continue
                previous = y
                tuples.extend(_emit(self.metric, x[i : i + 1], y[np.newaxis], ystar[i : i + 1]))
        return tuples

    def _corruption_mode(self) -> str:
        if self.sampler.corruption != "auto":
            return self.sampler.corruption
        return "flip" if len(self.net.output_shape) == 1 else "blend"

    def stratified(self, rng: Rng, x: np.ndarray, ystar: np.ndarray) -> List[TrainingTuple]:
        """One output per example drawn from a corrupted pool around y*."""
        s = self.sampler
        mode = self._corruption_mode()
        chosen = []
        for i in range(x.shape[0]):
            pool = corrupt_candidates(rng, ystar[i], s.n_candidates, mode)
            targets = np.broadcast_to(ystar[i], pool.shape)
            values = relaxed_value_batch(self.metric, pool, targets)
            chosen.append(pool[stratified_select(rng, values, s.tau, s.n_value_buckets)])
        return _emit(self.metric, x, np.stack(chosen), ystar)

    def adversarial(self, params, rng: Rng, x: np.ndarray, ystar: np.ndarray) -> List[TrainingTuple]:
        """Outputs found by projected ascent of the value loss in y."""
        s = self.sampler
        ystar = np.asarray(ystar, dtype=np.float64)
        if s.adversarial_init == "ground_truth":
            y = ystar.copy()
        else:
            y = rng.uniform(ystar.shape)
        frozen = relaxed_value_batch(self.metric, y, ystar) if s.freeze_oracle else None

        for _ in range(s.adversarial_steps):
            tape = ad.Tape()
            bound = self.net.bind(tape, params)
            y_var = tape.leaf(y)
            v, _ = self.net.forward(bound, x, y_var, "eval")
            target = frozen if frozen is not None else relaxed_value_var(self.metric, y_var, ystar)
            loss = ad.sum(value_loss_var(self.value_loss, v, target))
            grad = tape.backward(loss)[y_var.index]
            y = project(y + s.adversarial_step_size * grad)
        return _emit(self.metric, x, y, ystar)

    def generate(self, params, rng: Rng, x: np.ndarray, ystar: np.ndarray) -> List[TrainingTuple]:
        """Tuples for a batch under the configured strategy or mixture.

        A weight w gives each example floor(w) tuples of that strategy plus
        one more with probability w - floor(w).
        """
        weights = self.sampler.weights()
        tuples: List[TrainingTuple] = []
        batch = x.shape[0]
        for name in STRATEGIES:
            weight = weights.get(name, 0.0)
            if weight <= 0:
                continue
            whole = int(np.floor(weight))
            counts = whole + rng.bernoulli(batch, weight - whole).astype(int)
            for repeat in range(int(counts.max(initial=0))):
                rows = np.flatnonzero(counts > repeat)
                if rows.size:
                    tuples.extend(self._strategies[name](params, rng, x[rows], ystar[rows]))
        return tuples


def gen_ground_truth(x: np.ndarray, ystar: np.ndarray, metric: str = "f1") -> TrainingTuple:
    ystar = np.asarray(ystar, dtype=np.float64)
    return _emit(metric, np.asarray(x)[np.newaxis], ystar[np.newaxis], ystar[np.newaxis])[0]


def gen_inference(
    net,
    params,
    x,
    ystar,
    sampler: SamplerConfig,
    inference: InferenceConfig,
    metric: str,
    rng: Optional[Rng] = None,
) -> List[TrainingTuple]:
    generator = TupleGenerator(net, sampler, inference, metric)
    return generator.inference(params, x[np.newaxis], np.asarray(ystar)[np.newaxis], rng)


def gen_stratified(
    rng: Rng, x, ystar, sampler: SamplerConfig, metric: str, layout: str = "flat"
) -> TrainingTuple:
    mode = sampler.corruption
    if mode == "auto":
        mode = "flip" if layout == "flat" else "blend"
    pool = corrupt_candidates(rng, ystar, sampler.n_candidates, mode)
    values = relaxed_value_batch(metric, pool, np.broadcast_to(ystar, pool.shape))
    index = stratified_select(rng, values, sampler.tau, sampler.n_value_buckets)
    return TrainingTuple(np.asarray(x).copy(), pool[index].copy(), float(values[index]))


def gen_adversarial(
    net, params, rng: Rng, x, ystar, sampler: SamplerConfig, metric: str, value_loss: str = "ce"
) -> TrainingTuple:
    generator = TupleGenerator(net, sampler, InferenceConfig(), metric, value_loss)
    return generator.adversarial(params, rng, x[np.newaxis], np.asarray(ystar)[np.newaxis])[0]


class ProducerError(RuntimeError):
    """The background producer delivered no tuples in time."""


class TupleProducer:
    """Background worker filling a replay buffer with inference tuples.

    It reads a parameter snapshot that the trainer refreshes once per epoch,
    so its tuples come from weights at most one epoch old. An exception in
    the worker stops it and is raised again by :meth:`check`.
    """

    def __init__(
        self,
        generator: TupleGenerator,
        buffer: ReplayBuffer,
        inputs: np.ndarray,
        targets: np.ndarray,
        rng: Rng,
        batch_size: int = 8,
    ):
        self.generator = generator
        self.buffer = buffer
        self.inputs = inputs
        self.targets = targets
        self.rng = rng
        self.batch_size = batch_size
        self.lock = threading.RLock()
        self.snapshot = None
        self.thread: Optional[threading.Thread] = None
        self.running = False
        self.produced = 0
        self.error: Optional[BaseException] = None
        # set once tuples were pushed or the worker failed
        self._ready = threading.Event()

    def update_snapshot(self, params) -> None:
        with self.lock:
            self.snapshot = params

    def start(self) -> None:
        logger.info("Starting background tuple producer")
        self.running = True
        self.thread = threading.Thread(target=self._loop, daemon=True)
        self.thread.start()

    def check(self) -> None:
        """Raise the exception that stopped the worker, if any."""
        if self.error is not None:
            raise self.error

    def wait_for_tuples(self, timeout: float = 60.0) -> None:
        """Block until the first tuples are in the buffer.

        Raises the worker's exception if it failed, or ``ProducerError`` if
        nothing arrived within ``timeout`` seconds.
        """
        self._ready.wait(timeout)
        self.check()
        if len(self.buffer) == 0:
            raise ProducerError(f"tuple producer delivered no tuples within {timeout:.0f}s")

    def stop(self) -> None:
        logger.info(f"Stopping background tuple producer after {self.produced} tuples")
        self.running = False
        if self.thread:
            self.thread.join(timeout=30)

    def _loop(self) -> None:
        while self.running:
            with self.lock:
                params = self.snapshot
            if params is None:
                time.sleep(0.01)
                continue
            try:
                rows = self.rng.integers(0, len(self.inputs), size=self.batch_size)
                tuples = self.generator.inference(
                    params, self.inputs[rows], self.targets[rows], self.rng
                )
                self.buffer.push(tuples)
                self.produced += len(tuples)
            except Exception as e:
                logger.error(f"Error in tuple producer: {e}", exc_info=True)
                self.error = e
                self.running = False
            self._ready.set()
