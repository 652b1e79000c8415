"""Oracle value functions: relaxed IOU/F1 over [0, 1] outputs and their discrete metrics.

Intersection and union are element-wise min and max summed over every
dimension, so on binary inputs the relaxed values equal the usual set
metrics exactly. When both arguments are all zeros the union is empty and
both metrics return 1.0; when only one of them is empty they return 0.0.
"""

import logging
from typing import List, NamedTuple, Sequence

import numpy as np

from deep_value_nets.core import autodiff as ad

logger = logging.getLogger(__name__)

METRICS = ("f1", "iou")


class OracleError(ValueError):
    """Invalid oracle arguments."""


class DiscreteMetrics(NamedTuple):
    f1: float
    iou: float


def _pair(y, ystar, name: str):
    y = np.asarray(y, dtype=np.float64)
    ystar = np.asarray(ystar, dtype=np.float64)
    if y.shape != ystar.shape:
        raise OracleError(f"{name}: shape mismatch {y.shape} vs {ystar.shape}")
    return y, ystar


def _is_binary(values: np.ndarray) -> bool:
    return bool(np.all((values == 0.0) | (values == 1.0)))


def soft_intersection(y, ystar) -> float:
    y, ystar = _pair(y, ystar, "soft_intersection")
    return float(np.minimum(y, ystar).sum())


def soft_union(y, ystar) -> float:
    y, ystar = _pair(y, ystar, "soft_union")
    return float(np.maximum(y, ystar).sum())


def _iou(intersection: float, union: float) -> float:
    return 1.0 if union == 0.0 else intersection / union


def _f1(intersection: float, union: float) -> float:
    denominator = intersection + union
    return 1.0 if denominator == 0.0 else 2.0 * intersection / denominator


def relaxed_iou(y, ystar) -> float:
    return _iou(soft_intersection(y, ystar), soft_union(y, ystar))


def relaxed_f1(y, ystar) -> float:
    return _f1(soft_intersection(y, ystar), soft_union(y, ystar))


def relaxed_value(metric: str, y, ystar) -> float:
    """Oracle value v*(y, y*) for ``metric`` in ``METRICS``."""
    if metric == "f1":
        return relaxed_f1(y, ystar)
    if metric == "iou":
        return relaxed_iou(y, ystar)
    raise OracleError(f"unknown metric '{metric}', expected one of {METRICS}")


def relaxed_value_batch(metric: str, y, ystar) -> np.ndarray:
    """Per-example oracle values for arrays with a leading batch axis."""
    if metric not in METRICS:
        raise OracleError(f"unknown metric '{metric}', expected one of {METRICS}")
    y, ystar = _pair(y, ystar, "relaxed_value_batch")
    axes = tuple(range(1, y.ndim))
    intersection = np.minimum(y, ystar).sum(axis=axes)
    union = np.maximum(y, ystar).sum(axis=axes)
    combine = _f1 if metric == "f1" else _iou
    return np.array([combine(float(i), float(u)) for i, u in zip(intersection, union)])


def relaxed_value_var(metric: str, y: ad.Var, ystar: np.ndarray) -> ad.Var:
    """Differentiable per-example oracle values, shape ``[batch]``.

    The empty-union convention is applied by adding the same constant to
    numerator and denominator, which leaves a zero gradient there.
    """
    if y.shape != np.shape(ystar):
        raise OracleError(f"relaxed_value_var: shape mismatch {y.shape} vs {np.shape(ystar)}")
    axes = tuple(range(1, len(y.shape)))
    intersection = ad.sum(ad.minimum(y, ystar), axis=axes)
    union = ad.sum(ad.maximum(y, ystar), axis=axes)
    if metric == "iou":
        empty = (union.value == 0.0).astype(np.float64)
        return (intersection + empty) / (union + empty)
    if metric == "f1":
        empty = ((intersection.value + union.value) == 0.0).astype(np.float64)
        return (2.0 * intersection + empty) / (intersection + union + empty)
    raise OracleError(f"unknown metric '{metric}', expected one of {METRICS}")


def discrete_metrics(pred, ystar) -> DiscreteMetrics:
    """F1 and IOU of a binary prediction against a binary ground truth."""
    pred, ystar = _pair(pred, ystar, "discrete_metrics")
    if not (_is_binary(pred) and _is_binary(ystar)):
        raise OracleError("discrete_metrics needs binary prediction and ground truth")
    predicted = pred == 1.0
    actual = ystar == 1.0
    intersection = float(np.count_nonzero(predicted & actual))
    union = float(np.count_nonzero(predicted | actual))
    return DiscreteMetrics(f1=_f1(intersection, union), iou=_iou(intersection, union))


def _check_lists(preds: Sequence, gts: Sequence) -> None:
    if len(preds) == 0:
        raise OracleError("metric aggregation needs at least one example")
    if len(preds) != len(gts):
        raise OracleError(f"{len(preds)} predictions for {len(gts)} ground truths")


def aggregate_iou(preds: Sequence, gts: Sequence, mode: str = "mean") -> float:
    """Mean of per-example IOU, or IOU of everything concatenated (``global``)."""
    _check_lists(preds, gts)
    if mode == "mean":
        return float(np.mean([discrete_metrics(p, g).iou for p, g in zip(preds, gts)]))
    if mode == "global":
        flat_preds = np.concatenate([np.ravel(p) for p in preds])
        flat_gts = np.concatenate([np.ravel(g) for g in gts])
        return discrete_metrics(flat_preds, flat_gts).iou
    raise OracleError(f"unknown aggregation mode '{mode}', expected 'mean' or 'global'")


def mean_f1(preds: Sequence, gts: Sequence) -> float:
    """Example-averaged F1."""
    _check_lists(preds, gts)
    scores: List[float] = [discrete_metrics(p, g).f1 for p, g in zip(preds, gts)]
    return float(np.mean(scores))
