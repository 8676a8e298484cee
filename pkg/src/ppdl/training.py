"""Manifest-driven training and prediction on top of :mod:`ppdl.nn`."""

from __future__ import annotations

import numpy as np

from .dataset import DatasetManifest, load_split
from .nn import Network, TrainConfig, TrainReport, fit, predict


def train(net: Network, manifest: DatasetManifest, root, config: TrainConfig, log=None) -> TrainReport:
    x_tr, y_tr = load_split(manifest, root, "train", config.input_size, config.channels)
    x_va, y_va = load_split(manifest, root, "val", config.input_size, config.channels)
    return fit(net, x_tr, y_tr, x_va, y_va, config, log=log)


def predict_split(
    net: Network, manifest: DatasetManifest, root, split: str = "test"
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(true labels, predicted labels, probabilities)`` for one manifest split."""
    channels, size, _ = net.input_shape
    x, y = load_split(manifest, root, split, size, channels)
    if len(y) == 0:
        raise ValueError(f"split {split!r} is empty")
    pred, probs = predict(net, x)
    return y, pred, probs
