"""Synthetic clean-image generators and crafted weight bundles used by the
experiment scripts and the acceptance suite.

The box-filter bundle has all-non-negative kernels whose per-output weights
sum to one, so a brighter input provably never lowers the indicator and the
spatial spread of a local spike grows with depth.
"""

from __future__ import annotations

import numpy as np

from .bundle import Preprocess, WeightBundle
from .dataset import derive_rng
from .tensor import Conv, ConvLayerSpec, ReLU


def clean_image(
    seed: int,
    source_id: str,
    size: int = 128,
    base_range: tuple = (80, 190),
    noise_sigma: float = 4.0,
) -> np.ndarray:
    """A flat gray image with per-image random base level and mild pixel
    noise; (size, size, 3) uint8."""
    rng = derive_rng(seed, "clean-image", source_id)
    base = rng.uniform(*base_range)
    noise = rng.normal(0.0, noise_sigma, size=(size, size, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def clean_image_set(seed: int, count: int, prefix: str = "img", **kwargs):
    """List of (source_id, image) pairs, deterministic in seed."""
    return [
        (f"{prefix}{i:04d}", clean_image(seed, f"{prefix}{i:04d}", **kwargs))
        for i in range(count)
    ]


def _identity_preprocess(size: int) -> Preprocess:
    return Preprocess(
        target_size=(size, size),
        channel_mean=(0.0, 0.0, 0.0),
        channel_std=(1.0, 1.0, 1.0),
        channel_order="RGB",
        scale=1.0 / 255.0,
    )


def box_filter_bundle(
    n_convs: int = 3, channels: int = 2, size: int = 128, model_name: str = "boxnet"
) -> WeightBundle:
    """Non-negative box-smoothing bundle: every conv output is the 3x3 box
    average of the channel-averaged input, weights summing to exactly one."""
    layers, names = [], []
    in_c = 3
    for i in range(1, n_convs + 1):
        kernel = np.full(
            (channels, in_c, 3, 3), 1.0 / (9 * in_c), dtype=np.float32
        )
        bias = np.zeros(channels, dtype=np.float32)
        layers.append(Conv(ConvLayerSpec(in_c, channels, kernel, bias)))
        names.append(f"conv{i}")
        layers.append(ReLU())
        names.append(f"relu{i}")
        in_c = channels
    return WeightBundle(model_name, _identity_preprocess(size), layers, names)


def random_toy_bundle(
    seed: int = 0,
    n_convs: int = 2,
    channels: int = 4,
    size: int = 64,
    model_name: str = "toynet",
) -> WeightBundle:
    """Small random-weight bundle for calibration/precision experiments."""
    rng = np.random.default_rng(seed)
    layers, names = [], []
    in_c = 3
    for i in range(1, n_convs + 1):
        kernel = rng.normal(0.0, 0.3, size=(channels, in_c, 3, 3)).astype(np.float32)
        bias = rng.normal(0.0, 0.05, size=channels).astype(np.float32)
        layers.append(Conv(ConvLayerSpec(in_c, channels, kernel, bias)))
        names.append(f"conv{i}")
        layers.append(ReLU())
        names.append(f"relu{i}")
        in_c = channels
    return WeightBundle(model_name, _identity_preprocess(size), layers, names)
