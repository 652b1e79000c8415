"""Synthetic tasks with known structure: correlated multi-label data and shape masks."""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from deep_value_nets.core.rng import Rng
from deep_value_nets.models.datasets import GridDataset, MultiLabelDataset, MultiLabelExample

logger = logging.getLogger(__name__)

CORRELATIONS = ("none", "implication-chain", "block-xor")
SHAPES = ("bar", "blob", "horse")

# P(label j+1 | label j) along an implication chain
CHAIN_PROB = 0.9
# P(third label of a block == xor of the first two)
XOR_PROB = 0.9
XOR_BLOCK = 3

FOREGROUND = 0.8
ATTENUATED = 0.3
CLUTTER_RANGE = (0.15, 0.4)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MultiLabelGenerator:
    """Generative model behind :func:`gen_synthetic_multilabel`.

    Each label has a logistic base probability given x; the correlation mode
    then couples labels. ``marginals`` gives the exact per-label posterior,
    which is what the best independent classifier can know.
    """

    weights: np.ndarray
    bias: np.ndarray
    correlation: str

    @property
    def n_labels(self) -> int:
        return self.bias.size

    def base_probabilities(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(x @ self.weights + self.bias)

    def sample_labels(self, rng: Rng, x: np.ndarray) -> np.ndarray:
        base = rng.uniform((x.shape[0], self.n_labels)) < self.base_probabilities(x)
        labels = base.astype(np.float64)
        if self.correlation == "implication-chain":
            follow = rng.uniform(labels.shape) < CHAIN_PROB
            for j in range(1, self.n_labels):
                active = labels[:, j - 1] == 1.0
                labels[active, j] = follow[active, j]
        elif self.correlation == "block-xor":
            agree = rng.uniform(labels.shape) < XOR_PROB
            for start in range(0, self.n_labels - XOR_BLOCK + 1, XOR_BLOCK):
                a, b, c = start, start + 1, start + 2
                xor = labels[:, a] != labels[:, b]
                labels[:, c] = np.where(agree[:, c], xor, ~xor).astype(np.float64)
        return labels

    def marginals(self, x: np.ndarray) -> np.ndarray:
        """Exact P(label_j = 1 | x) under the generative model."""
        p = self.base_probabilities(x)
        marginal = p.copy()
        if self.correlation == "implication-chain":
            for j in range(1, self.n_labels):
                marginal[:, j] = marginal[:, j - 1] * CHAIN_PROB + (1.0 - marginal[:, j - 1]) * p[:, j]
        elif self.correlation == "block-xor":
            for start in range(0, self.n_labels - XOR_BLOCK + 1, XOR_BLOCK):
                a, b, c = start, start + 1, start + 2
                q = p[:, a] * (1.0 - p[:, b]) + p[:, b] * (1.0 - p[:, a])
                marginal[:, c] = XOR_PROB * q + (1.0 - XOR_PROB) * (1.0 - q)
        return marginal

    def independent_predictions(self, x: np.ndarray) -> np.ndarray:
        """Bayes-optimal per-label decisions (threshold the exact marginals)."""
        return (self.marginals(x) >= 0.5).astype(np.float64)


def make_multilabel_generator(
    rng: Rng, n_features: int, n_labels: int, correlation: str
) -> MultiLabelGenerator:
    if correlation not in CORRELATIONS:
        raise ValueError(f"unknown correlation '{correlation}', expected one of {CORRELATIONS}")
    if n_features < 1 or n_labels < 1:
        raise ValueError("n_features and n_labels must be positive")
    weights = rng.normal((n_features, n_labels), 0.0, 3.0 / np.sqrt(n_features))
    # chain starts are rare
    offset = -2.5 if correlation == "implication-chain" else -1.0
    bias = rng.normal(n_labels, offset, 0.5)
    return MultiLabelGenerator(weights, bias, correlation)


def gen_synthetic_multilabel(
    rng: Rng,
    n: int,
    n_features: int,
    n_labels: int,
    correlation: str = "implication-chain",
    generator: MultiLabelGenerator = None,
) -> Tuple[MultiLabelDataset, MultiLabelGenerator]:
    """Dense Gaussian features with labels coupled per ``correlation``."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if generator is None:
        generator = make_multilabel_generator(rng, n_features, n_labels, correlation)
    x = rng.normal((n, n_features))
    labels = generator.sample_labels(rng, x)
    indices = tuple(range(n_features))
    examples = [
        MultiLabelExample(
            indices,
            tuple(float(v) for v in x[i]),
            tuple(int(j) for j in np.flatnonzero(labels[i])),
        )
        for i in range(n)
    ]
    return MultiLabelDataset(n_features, n_labels, examples), generator


def _ellipse(rows, cols, center: Tuple[float, float], radii: Tuple[float, float]) -> np.ndarray:
    return ((rows - center[0]) / radii[0]) ** 2 + ((cols - center[1]) / radii[1]) ** 2 <= 1.0


def _render(rng: Rng, shape: str, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """Mask of one shape and the mask of its thin protrusions."""
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    protrusion = np.zeros((height, width), dtype=bool)

    if shape == "bar":
        thickness = int(rng.integers(2, max(3, height // 4 + 1)))
        length = int(rng.integers(height // 2, height - 1))
        top = int(rng.integers(0, height - length + 1))
        left = int(rng.integers(0, width - thickness + 1))
        mask = (rows >= top) & (rows < top + length) & (cols >= left) & (cols < left + thickness)
        if rng.uniform() < 0.5:
            mask = mask.T if height == width else mask
    elif shape == "blob":
        center = (
            float(rng.uniform((), height / 4, 3 * height / 4)),
            float(rng.uniform((), width / 4, 3 * width / 4)),
        )
        radii = (
            float(rng.uniform((), height / 6, height / 3)),
            float(rng.uniform((), width / 6, width / 3)),
        )
        mask = _ellipse(rows, cols, center, radii)
    else:
        scale = float(rng.uniform((), 0.9, 1.1))
        body_center = (
            0.45 * height + float(rng.uniform((), -1.0, 1.0)),
            0.5 * width + float(rng.uniform((), -1.5, 1.5)),
        )
        body_radii = (0.15 * height * scale, 0.3 * width * scale)
        body = _ellipse(rows, cols, body_center, body_radii)
        head_center = (body_center[0] - 0.2 * height, body_center[1] + 0.3 * width * scale)
        head = _ellipse(rows, cols, head_center, (0.1 * height, 0.1 * width))
        legs = np.zeros_like(body)
        leg_top = int(np.floor(body_center[0] + body_radii[0]))
        leg_bottom = min(height, int(round(0.9 * height)) + 1)
        for offset in (-0.22, -0.12, 0.12, 0.22):
            col = int(round(body_center[1] + offset * width * scale))
            if 0 <= col < width:
                legs[leg_top:leg_bottom, col] = True
        mask = body | head | legs
        protrusion = legs & ~(body | head)
    return mask.astype(np.float64), protrusion.astype(np.float64)


def gen_synthetic_shapes(
    rng: Rng,
    n: int,
    height: int = 16,
    width: int = 16,
    shape: str = "horse",
    noise: float = 0.1,
    attenuate_protrusions: bool = False,
    clutter: int = 3,
) -> GridDataset:
    """Rendered shapes over background clutter with Gaussian pixel noise.

    Masks are the clean shapes. With ``attenuate_protrusions`` the thin parts
    are drawn at clutter intensity, so only a shape prior can recover them.
    """
    if shape not in SHAPES:
        raise ValueError(f"unknown shape '{shape}', expected one of {SHAPES}")
    if n < 1 or height < 4 or width < 4 or noise < 0 or clutter < 0:
        raise ValueError("invalid synthetic shapes specification")

    images = np.empty((n, height, width))
    masks = np.empty((n, height, width))
    protrusions = np.empty((n, height, width))
    for i in range(n):
        image = np.zeros((height, width))
        for _ in range(clutter):
            h = int(rng.integers(1, max(2, height // 3)))
            w = int(rng.integers(1, max(2, width // 3)))
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            image[top : top + h, left : left + w] = float(rng.uniform((), *CLUTTER_RANGE))
        mask, protrusion = _render(rng, shape, height, width)
        body = (mask == 1.0) & (protrusion == 0.0)
        image[body] = FOREGROUND
        image[protrusion == 1.0] = ATTENUATED if attenuate_protrusions else FOREGROUND
        if noise > 0:
            image = image + rng.normal((height, width), 0.0, noise)
        images[i] = np.clip(image, 0.0, 1.0)
        masks[i] = mask
        protrusions[i] = protrusion
    logger.debug(f"Generated {n} synthetic '{shape}' images of {height}x{width}")
    return GridDataset(height, width, images, masks, protrusions)
