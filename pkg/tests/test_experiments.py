"""Tests for dataset assembly, the strategy ablation and prior panels."""

import numpy as np
import pytest

from deep_value_nets.core.rng import Rng
from deep_value_nets.core.synthetic import gen_synthetic_shapes
from deep_value_nets.core.value_net import ConvValueNet
from deep_value_nets.models.config import ConfigError, ConvSpec, ConvValueNetConfig, InferenceConfig
from deep_value_nets.models.datasets import GridDataset, MultiLabelDataset
from deep_value_nets.services.experiments import (
    ABLATION_MIXTURES,
    AblationRow,
    ablation_table,
    load_datasets,
    prior_panel,
    run_ablation,
    write_prior_panel,
)
from deep_value_nets.utils.formats import read_pnm, save_multilabel


def test_synthetic_splits_are_seeded(tiny_multilabel_config):
    first = load_datasets(tiny_multilabel_config)
    second = load_datasets(tiny_multilabel_config)
    assert isinstance(first.train, MultiLabelDataset)
    assert first.valid is None
    assert (len(first.train), len(first.test)) == (40, 10)
    assert np.array_equal(first.train.inputs(), second.train.inputs())


def test_file_splits(tmp_path, tiny_multilabel_config):
    splits = load_datasets(tiny_multilabel_config)
    save_multilabel(tmp_path / "train.txt", splits.train)
    save_multilabel(tmp_path / "test.txt", splits.test)
    config = tiny_multilabel_config.model_copy(deep=True)
    config.data.train_path = str(tmp_path / "train.txt")
    config.data.test_path = str(tmp_path / "test.txt")
    loaded = load_datasets(config)
    assert np.allclose(loaded.train.inputs(), splits.train.inputs())
    assert loaded.valid is None


def test_synthetic_kind_must_fit_task(tiny_multilabel_config):
    config = tiny_multilabel_config.model_copy(update={"task": "grid"})
    with pytest.raises(ConfigError):
        load_datasets(config)


def test_ablation_trains_each_mixture(tiny_multilabel_config):
    config = tiny_multilabel_config.model_copy(deep=True)
    config.training.epochs = 1
    splits = load_datasets(config)
    rows = run_ablation(config, splits)
    assert [row.name for row in rows] == list(ABLATION_MIXTURES)
    assert all(0.0 <= row.metrics["f1"] <= 1.0 for row in rows)
    table = ablation_table(rows, "f1")
    assert len(table) == 4
    assert table[0].split() == ["mixture", "f1"]


def test_ablation_row_renders_percent():
    row = AblationRow("inference + adversarial", {"inference": 1.0}, {"mean_iou": 0.8125})
    assert row.render("mean_iou").endswith("81.25")


def test_prior_panel(tmp_path):
    dataset = gen_synthetic_shapes(Rng(0), 4, 6, 6, "blob", 0.05)
    assert isinstance(dataset, GridDataset)
    config = ConvValueNetConfig(
        height=6,
        width=6,
        conv_specs=[
            ConvSpec(kernel=3, in_ch=2, out_ch=2),
            ConvSpec(kernel=3, in_ch=2, out_ch=2, stride=2),
            ConvSpec(kernel=3, in_ch=2, out_ch=2, stride=2),
        ],
        fc_widths=[4, 4],
    )
    net = ConvValueNet(config)
    params = net.init_params(Rng(1))
    panel = prior_panel(net, params, dataset, 10.0, Rng(2), InferenceConfig(steps=2), samples=2)
    assert len(panel.relaxed) == 2
    assert np.array_equal(panel.mean_mask, dataset.masks.mean(axis=0))

    written = write_prior_panel(tmp_path, panel)
    assert [p.name for p in written] == [
        "mean_image.pgm",
        "mean_mask.pgm",
        "prior_000_soft.pgm",
        "prior_000.pbm",
        "prior_001_soft.pgm",
        "prior_001.pbm",
    ]
    assert np.array_equal(read_pnm(tmp_path / "prior_001.pbm"), panel.rounded[1])
    with pytest.raises(ValueError):
        prior_panel(net, params, dataset, 10.0, Rng(2), InferenceConfig(), samples=0)
