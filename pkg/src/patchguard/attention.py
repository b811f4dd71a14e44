"""Attention map (channel mean of an activation map) and its max-value
indicator, the scalar the whole detector hinges on."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import WeightBundle
from .errors import ConfigError, ShapeError
from .tensor import Conv, ReLU, Tensor, forward_prefix

TAP_PRE = "pre"
TAP_POST = "post"


@dataclass(frozen=True)
class AttentionMap:
    """Per-pixel channel mean, shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ShapeError(f"attention map must be 2-D non-empty, got {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def attention_map(activation: Tensor) -> AttentionMap:
    """Mean over the channel axis: out[h, w] = (1/C) * sum_c F[c, h, w]."""
    return AttentionMap(activation.array.mean(axis=0, dtype=np.float32))


def indicator_ir(attn: AttentionMap) -> float:
    """The maximum value of the attention map."""
    return float(attn.values.max())


def resolve_tap_index(bundle: WeightBundle, layer, tap: str = TAP_POST) -> int:
    """Index of the activation to read for a named conv layer.

    Post tap resolves to the ReLU immediately following the conv; pre tap is
    the conv output itself.
    """
    if tap not in (TAP_PRE, TAP_POST):
        raise ConfigError(f"tap must be 'pre' or 'post', got {tap!r}")
    try:
        idx = bundle.layer_index(layer)
    except Exception as e:
        raise ConfigError(str(e)) from e
    if not isinstance(bundle.layers[idx], Conv):
        raise ConfigError(
            f"layer {bundle.layer_names[idx]!r} is not a convolution layer"
        )
    if tap == TAP_PRE:
        return idx
    if idx + 1 < len(bundle.layers) and isinstance(bundle.layers[idx + 1], ReLU):
        return idx + 1
    raise ConfigError(
        f"no ReLU follows conv layer {bundle.layer_names[idx]!r}; use tap='pre'"
    )


def indicator_at_layer(
    image: Tensor, bundle: WeightBundle, layer, tap: str = TAP_POST
) -> float:
    """Forward the image through the prefix ending at the tapped activation
    and return the attention-map maximum."""
    idx = resolve_tap_index(bundle, layer, tap)
    activation = forward_prefix(image, bundle.layers, idx)
    return indicator_ir(attention_map(activation))
