"""Dense rank-3 tensors and the three layer kernels needed for shallow
VGG-style prefixes: 3x3 same-padding convolution, ReLU and 2x2 max-pooling.

Layout is channel-major (C, H, W), float32 throughout. All operations are
pure; tensors are treated as immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import NumericError, ShapeError


@dataclass(frozen=True)
class Tensor:
    """A (channels, height, width) float32 array."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=np.float32)
        if arr.ndim != 3:
            raise ShapeError(f"tensor must be rank 3 (C,H,W), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"tensor dimensions must be positive, got {arr.shape}")
        object.__setattr__(self, "array", arr)

    @property
    def channels(self) -> int:
        return self.array.shape[0]

    @property
    def height(self) -> int:
        return self.array.shape[1]

    @property
    def width(self) -> int:
        return self.array.shape[2]

    @property
    def data(self) -> np.ndarray:
        """Flat channel-major view, length C*H*W."""
        return self.array.reshape(-1)

    @classmethod
    def from_flat(cls, data, channels: int, height: int, width: int) -> "Tensor":
        flat = np.asarray(data, dtype=np.float32)
        if flat.size != channels * height * width:
            raise ShapeError(
                f"flat data length {flat.size} != {channels}*{height}*{width}"
            )
        return cls(flat.reshape(channels, height, width))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.array).all())


@dataclass(frozen=True)
class ConvLayerSpec:
    """3x3 convolution weights, stride 1, zero padding 1 (same-size output)."""

    in_channels: int
    out_channels: int
    kernel: np.ndarray  # (out, in, 3, 3) float32
    bias: np.ndarray  # (out,) float32

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("channel counts must be positive")
        k = np.asarray(self.kernel, dtype=np.float32)
        b = np.asarray(self.bias, dtype=np.float32)
        want = (self.out_channels, self.in_channels, 3, 3)
        if k.size != self.out_channels * self.in_channels * 9:
            raise ShapeError(f"kernel size {k.size} != {want}")
        k = k.reshape(want)
        if b.shape != (self.out_channels,):
            raise ShapeError(f"bias shape {b.shape} != ({self.out_channels},)")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class Conv:
    spec: ConvLayerSpec


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool2x2:
    pass


LayerOp = Union[Conv, ReLU, MaxPool2x2]


def _require_finite(t: Tensor, what: str) -> None:
    if not t.is_finite():
        raise NumericError(f"{what} contains non-finite values")


def conv3x3(t: Tensor, spec: ConvLayerSpec) -> Tensor:
    """Same-padding 3x3 convolution, stride 1, f32 accumulation."""
    if t.channels != spec.in_channels:
        raise ShapeError(
            f"input has {t.channels} channels, conv expects {spec.in_channels}"
        )
    _require_finite(t, "conv3x3 input")
    padded = np.pad(t.array, ((0, 0), (1, 1), (1, 1)))
    # (C, H, W, 3, 3) sliding windows, then one contraction per output channel
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
    out = np.einsum("ihwyx,oiyx->ohw", windows, spec.kernel, dtype=np.float32)
    out += spec.bias[:, None, None]
    return Tensor(out)


def relu(t: Tensor) -> Tensor:
    _require_finite(t, "relu input")
    return Tensor(np.maximum(t.array, np.float32(0.0)))


def maxpool2x2(t: Tensor) -> Tensor:
    """Non-overlapping 2x2 max pooling; rejects odd spatial dimensions."""
    if t.height % 2 or t.width % 2:
        raise ShapeError(
            f"maxpool2x2 requires even spatial dims, got {t.height}x{t.width}"
        )
    c, h, w = t.channels, t.height, t.width
    out = t.array.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))
    return Tensor(out)


def apply_layer(t: Tensor, op: LayerOp) -> Tensor:
    if isinstance(op, Conv):
        return conv3x3(t, op.spec)
    if isinstance(op, ReLU):
        return relu(t)
    if isinstance(op, MaxPool2x2):
        return maxpool2x2(t)
    raise ShapeError(f"unknown layer op {op!r}")


def output_shape(
    layers: list, input_shape: tuple, upto: int | None = None
) -> tuple:
    """Shape (C,H,W) after layers[0..=upto], computed from the layer list alone."""
    c, h, w = input_shape
    end = len(layers) - 1 if upto is None else upto
    for op in layers[: end + 1]:
        if isinstance(op, Conv):
            if c != op.spec.in_channels:
                raise ShapeError(
                    f"shape algebra: {c} channels into conv expecting "
                    f"{op.spec.in_channels}"
                )
            c = op.spec.out_channels
        elif isinstance(op, MaxPool2x2):
            if h % 2 or w % 2:
                raise ShapeError(f"shape algebra: odd dims {h}x{w} into maxpool")
            h, w = h // 2, w // 2
    return (c, h, w)


def forward_prefix(t: Tensor, layers: list, upto: int) -> Tensor:
    """Apply layers[0..=upto] sequentially; errors name the failing layer."""
    if upto >= len(layers):
        raise ShapeError(f"prefix end {upto} beyond layer count {len(layers)}")
    out = t
    for i, op in enumerate(layers[: upto + 1]):
        try:
            out = apply_layer(out, op)
        except (ShapeError, NumericError) as e:
            raise type(e)(f"layer {i}: {e}") from e
    return out
