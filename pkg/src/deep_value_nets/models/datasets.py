"""Dataset value types for the multi-label and grid segmentation tasks."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np


class DataFormatError(ValueError):
    """Malformed or inconsistent data, with the location when known."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")


@dataclass(frozen=True)
class MultiLabelExample:
    """Sparse features and the set of active labels of one example."""

    feature_indices: Tuple[int, ...]
    feature_values: Tuple[float, ...]
    labels: Tuple[int, ...]


@dataclass
class MultiLabelDataset:
    n_features: int
    n_labels: int
    examples: List[MultiLabelExample] = field(default_factory=list)

    def __post_init__(self):
        for number, example in enumerate(self.examples):
            validate_multilabel_example(example, self.n_features, self.n_labels, number)

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return (self.n_labels,)

    def inputs(self, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """Dense feature matrix ``[batch, n_features]``."""
        chosen = self._select(indices)
        dense = np.zeros((len(chosen), self.n_features))
        for row, example in enumerate(chosen):
            dense[row, list(example.feature_indices)] = example.feature_values
        return dense

    def targets(self, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """Binary label matrix ``[batch, n_labels]``."""
        chosen = self._select(indices)
        dense = np.zeros((len(chosen), self.n_labels))
        for row, example in enumerate(chosen):
            dense[row, list(example.labels)] = 1.0
        return dense

    def subset(self, indices: Sequence[int]) -> "MultiLabelDataset":
        return MultiLabelDataset(self.n_features, self.n_labels, self._select(indices))

    def concat(self, other: "MultiLabelDataset") -> "MultiLabelDataset":
        if (other.n_features, other.n_labels) != (self.n_features, self.n_labels):
            raise DataFormatError("cannot concatenate datasets with different dimensions")
        return MultiLabelDataset(self.n_features, self.n_labels, self.examples + other.examples)

    def _select(self, indices: Optional[Sequence[int]]) -> List[MultiLabelExample]:
        if indices is None:
            return list(self.examples)
        return [self.examples[int(i)] for i in indices]


def validate_multilabel_example(
    example: MultiLabelExample, n_features: int, n_labels: int, number: int = 0
) -> None:
    if len(set(example.labels)) != len(example.labels):
        raise DataFormatError(f"example {number}: duplicate labels {list(example.labels)}")
    for label in example.labels:
        if not 0 <= label < n_labels:
            raise DataFormatError(f"example {number}: label {label} outside [0, {n_labels})")
    if len(example.feature_indices) != len(example.feature_values):
        raise DataFormatError(f"example {number}: feature indices and values differ in length")
    for index in example.feature_indices:
        if not 0 <= index < n_features:
            raise DataFormatError(f"example {number}: feature {index} outside [0, {n_features})")


@dataclass
class GridDataset:
    """Images in [0, 1] with binary masks, both ``[n, height, width]``.

    ``protrusions`` optionally marks thin parts of each mask (synthetic data
    only) so their recovery can be scored separately.
    """

    height: int
    width: int
    images: np.ndarray
    masks: np.ndarray
    protrusions: Optional[np.ndarray] = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.masks = np.asarray(self.masks, dtype=np.float64)
        expected = (self.height, self.width)
        if self.images.ndim != 3 or self.images.shape[1:] != expected:
            raise DataFormatError(f"images have shape {self.images.shape}, expected [n, {expected}]")
        if self.masks.shape != self.images.shape:
            raise DataFormatError(
                f"masks have shape {self.masks.shape}, images {self.images.shape}"
            )
        if not np.all((self.masks == 0.0) | (self.masks == 1.0)):
            raise DataFormatError("masks must be binary")
        if np.any(self.images < 0.0) or np.any(self.images > 1.0):
            raise DataFormatError("image values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return (self.height, self.width)

    def inputs(self, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """Single-channel images ``[batch, height, width, 1]``."""
        images = self.images if indices is None else self.images[np.asarray(indices, dtype=int)]
        return images[..., np.newaxis]

    def targets(self, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        return self.masks if indices is None else self.masks[np.asarray(indices, dtype=int)]

    def subset(self, indices: Sequence[int]) -> "GridDataset":
        indices = np.asarray(indices, dtype=int)
        protrusions = None if self.protrusions is None else self.protrusions[indices]
        return GridDataset(
            self.height, self.width, self.images[indices], self.masks[indices], protrusions
        )

    def concat(self, other: "GridDataset") -> "GridDataset":
        if (other.height, other.width) != (self.height, self.width):
            raise DataFormatError("cannot concatenate grids of different sizes")
        protrusions = None
        if self.protrusions is not None and other.protrusions is not None:
            protrusions = np.concatenate([self.protrusions, other.protrusions])
        return GridDataset(
            self.height,
            self.width,
            np.concatenate([self.images, other.images]),
            np.concatenate([self.masks, other.masks]),
            protrusions,
        )

    def mean_image(self) -> np.ndarray:
        return self.images.mean(axis=0)

    def mean_mask(self) -> np.ndarray:
        return self.masks.mean(axis=0)


Dataset = Union[MultiLabelDataset, GridDataset]
