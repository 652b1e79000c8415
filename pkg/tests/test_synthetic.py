"""Tests for the synthetic task generators."""

import numpy as np
import pytest

from deep_value_nets.core.oracle import aggregate_iou
from deep_value_nets.core.rng import Rng
from deep_value_nets.core.synthetic import (
    CHAIN_PROB,
    gen_synthetic_multilabel,
    gen_synthetic_shapes,
    make_multilabel_generator,
)


def test_implication_chain_conditional_probability():
    dataset, _ = gen_synthetic_multilabel(Rng(0), 4000, 10, 6, "implication-chain")
    labels = dataset.targets()
    active = labels[:, :-1] == 1.0
    following = labels[:, 1:][active]
    assert following.size > 200
    assert 0.85 <= following.mean() <= 0.95
    assert CHAIN_PROB == 0.9


def test_marginals_match_sampled_frequencies():
    rng = Rng(1)
    generator = make_multilabel_generator(rng, 5, 6, "block-xor")
    x = np.repeat(rng.normal((1, 5)), 20000, axis=0)
    labels = generator.sample_labels(rng, x)
    assert np.allclose(labels.mean(axis=0), generator.marginals(x[:1])[0], atol=0.02)


def test_shared_generator_between_splits():
    rng = Rng(2)
    train, generator = gen_synthetic_multilabel(rng, 20, 4, 3, "none")
    test, same = gen_synthetic_multilabel(rng, 10, 4, 3, "none", generator)
    assert same is generator
    assert (len(train), len(test)) == (20, 10)
    predictions = generator.independent_predictions(test.inputs())
    assert set(np.unique(predictions)) <= {0.0, 1.0}


def test_generator_rejects_unknown_correlation():
    with pytest.raises(ValueError):
        make_multilabel_generator(Rng(0), 3, 3, "cyclic")


@pytest.mark.parametrize("shape", ["bar", "blob", "horse"])
def test_clean_images_threshold_to_masks(shape):
    """Without noise or clutter the mask is recoverable from the image."""
    dataset = gen_synthetic_shapes(Rng(3), 10, 16, 16, shape, noise=0.0, clutter=0)
    predictions = list((dataset.images > 0.5).astype(np.float64))
    assert aggregate_iou(predictions, list(dataset.masks)) >= 0.99


def test_attenuated_protrusions_defeat_thresholding():
    dataset = gen_synthetic_shapes(
        Rng(4), 20, 16, 16, "horse", noise=0.0, attenuate_protrusions=True
    )
    assert dataset.protrusions.sum() > 0
    hits = ((dataset.images > 0.5) * dataset.protrusions).sum()
    assert hits / dataset.protrusions.sum() < 0.3
    assert np.all((dataset.images >= 0) & (dataset.images <= 1))


def test_shapes_are_seeded():
    a = gen_synthetic_shapes(Rng(5), 3, 8, 8, "blob", 0.1)
    b = gen_synthetic_shapes(Rng(5), 3, 8, 8, "blob", 0.1)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.masks, b.masks)
    with pytest.raises(ValueError):
        gen_synthetic_shapes(Rng(5), 3, 8, 8, "star")
