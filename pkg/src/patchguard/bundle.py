"""Portable binary container (PGWB) for shallow network prefixes, plus the
image preprocessing pipeline whose parameters it embeds.

PGWB byte layout (all integers little-endian):

    magic           4 bytes, b"PGWB"
    version         u16 (currently 1)
    model_name      u32 length + UTF-8 bytes
    preprocess      target_h u32, target_w u32, scale f32,
                    mean 3*f32, std 3*f32, channel_order u8 (0=RGB, 1=BGR)
    layer_count     u32
    per layer       name (u32 length + UTF-8), kind u8 (0=conv, 1=relu, 2=maxpool);
                    conv layers append: in_channels u32, out_channels u32,
                    kernel raw f32 LE (out*in*9 values), bias raw f32 LE (out values)

Bundles are validated on load and immutable afterwards; any structural
violation rejects the whole file.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, IoError, ShapeError, ValidationError
from .tensor import Conv, ConvLayerSpec, LayerOp, MaxPool2x2, ReLU, Tensor

MAGIC = b"PGWB"
VERSION = 1

KIND_CONV = 0
KIND_RELU = 1
KIND_MAXPOOL = 2

# Standard ImageNet preprocessing used by official VGG-family releases.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class Preprocess:
    target_size: tuple  # (height, width)
    channel_mean: tuple  # 3 floats
    channel_std: tuple  # 3 floats, all > 0
    channel_order: str = "RGB"  # "RGB" or "BGR"
    scale: float = 1.0 / 255.0  # applied before mean/std

    def __post_init__(self):
        if len(self.target_size) != 2 or min(self.target_size) < 1:
            raise ValidationError(f"bad target_size {self.target_size}")
        if len(self.channel_mean) != 3 or len(self.channel_std) != 3:
            raise ValidationError("mean/std must have 3 entries")
        if any(s <= 0 for s in self.channel_std):
            raise ValidationError("channel_std entries must be strictly positive")
        if self.channel_order not in ("RGB", "BGR"):
            raise ValidationError(f"bad channel_order {self.channel_order!r}")
        # pin to the f32 precision the wire format carries
        object.__setattr__(
            self, "target_size", (int(self.target_size[0]), int(self.target_size[1]))
        )
        object.__setattr__(
            self, "channel_mean", tuple(float(np.float32(v)) for v in self.channel_mean)
        )
        object.__setattr__(
            self, "channel_std", tuple(float(np.float32(v)) for v in self.channel_std)
        )
        object.__setattr__(self, "scale", float(np.float32(self.scale)))


def imagenet_preprocess(size: int = 224) -> Preprocess:
    return Preprocess(
        target_size=(size, size),
        channel_mean=IMAGENET_MEAN,
        channel_std=IMAGENET_STD,
        channel_order="RGB",
        scale=1.0 / 255.0,
    )


@dataclass(frozen=True)
class WeightBundle:
    model_name: str
    preprocess: Preprocess
    layers: list  # of LayerOp
    layer_names: list  # parallel list of strings

    def __post_init__(self):
        _validate_structure(self.model_name, self.layers, self.layer_names)

    def layer_index(self, name_or_index) -> int:
        """Resolve a layer name or integer index to a list index."""
        if isinstance(name_or_index, int):
            if not 0 <= name_or_index < len(self.layers):
                raise ValidationError(f"layer index {name_or_index} out of range")
            return name_or_index
        try:
            return self.layer_names.index(name_or_index)
        except ValueError:
            raise ValidationError(
                f"no layer named {name_or_index!r} in bundle "
                f"(have {', '.join(self.layer_names)})"
            ) from None

    def conv_layer_names(self) -> list:
        return [
            n for n, op in zip(self.layer_names, self.layers) if isinstance(op, Conv)
        ]


def _validate_structure(model_name, layers, layer_names):
    if not model_name:
        raise ValidationError("model_name must be non-empty")
    if len(layers) != len(layer_names):
        raise ValidationError("layer_names length differs from layers")
    if len(set(layer_names)) != len(layer_names):
        raise ValidationError("layer_names are not unique")
    if not layers:
        raise ValidationError("bundle has no layers")
    channels = None
    for name, op in zip(layer_names, layers):
        if isinstance(op, Conv):
            if channels is not None and op.spec.in_channels != channels:
                raise ValidationError(
                    f"layer {name!r} expects {op.spec.in_channels} channels "
                    f"but receives {channels}"
                )
            channels = op.spec.out_channels


# ---------------------------------------------------------------------------
# Serialization


class _Writer:
    def __init__(self):
        self.parts = []

    def raw(self, b: bytes):
        self.parts.append(b)

    def u16(self, v: int):
        self.raw(struct.pack("<H", v))

    def u32(self, v: int):
        self.raw(struct.pack("<I", v))

    def u8(self, v: int):
        self.raw(struct.pack("<B", v))

    def f32(self, v: float):
        self.raw(struct.pack("<f", v))

    def string(self, s: str):
        b = s.encode("utf-8")
        self.u32(len(b))
        self.raw(b)

    def f32_array(self, arr: np.ndarray):
        self.raw(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    def bytes(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated file: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        b = self.data[self.pos : self.pos + n]
        self.pos += n
        return b

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self.take(4))[0]

    def string(self, what: str) -> str:
        n = self.u32()
        if n > 1 << 20:
            raise FormatError(f"implausible {what} length {n} at offset {self.pos - 4}")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"bad UTF-8 in {what}: {e}") from e

    def f32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(
            np.float32, copy=True
        )


def bundle_to_bytes(bundle: WeightBundle) -> bytes:
    w = _Writer()
    w.raw(MAGIC)
    w.u16(VERSION)
    w.string(bundle.model_name)
    pre = bundle.preprocess
    w.u32(pre.target_size[0])
    w.u32(pre.target_size[1])
    w.f32(pre.scale)
    for v in pre.channel_mean:
        w.f32(v)
    for v in pre.channel_std:
        w.f32(v)
    w.u8(0 if pre.channel_order == "RGB" else 1)
    w.u32(len(bundle.layers))
    for name, op in zip(bundle.layer_names, bundle.layers):
        w.string(name)
        if isinstance(op, Conv):
            w.u8(KIND_CONV)
            w.u32(op.spec.in_channels)
            w.u32(op.spec.out_channels)
            w.f32_array(op.spec.kernel)
            w.f32_array(op.spec.bias)
        elif isinstance(op, ReLU):
            w.u8(KIND_RELU)
        elif isinstance(op, MaxPool2x2):
            w.u8(KIND_MAXPOOL)
        else:
            raise ValidationError(f"unserializable layer op {op!r}")
    return w.bytes()


def bundle_from_bytes(data: bytes) -> WeightBundle:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise FormatError("bad magic: not a PGWB file")
    version = r.u16()
    if version != VERSION:
        raise FormatError(f"unsupported PGWB version {version}")
    model_name = r.string("model_name")
    th, tw = r.u32(), r.u32()
    scale = r.f32()
    mean = tuple(r.f32() for _ in range(3))
    std = tuple(r.f32() for _ in range(3))
    order_tag = r.u8()
    if order_tag not in (0, 1):
        raise FormatError(f"bad channel_order tag {order_tag}")
    preprocess = Preprocess(
        target_size=(th, tw),
        channel_mean=mean,
        channel_std=std,
        channel_order="RGB" if order_tag == 0 else "BGR",
        scale=scale,
    )
    n_layers = r.u32()
    if n_layers > 10000:
        raise FormatError(f"implausible layer count {n_layers}")
    layers, names = [], []
    for _ in range(n_layers):
        name = r.string("layer name")
        kind = r.u8()
        if kind == KIND_CONV:
            in_c, out_c = r.u32(), r.u32()
            if not (1 <= in_c <= 65536 and 1 <= out_c <= 65536):
                raise FormatError(f"implausible conv channels {in_c}x{out_c}")
            kernel = r.f32_array(out_c * in_c * 9).reshape(out_c, in_c, 3, 3)
            bias = r.f32_array(out_c)
            try:
                layers.append(Conv(ConvLayerSpec(in_c, out_c, kernel, bias)))
            except ShapeError as e:
                raise ValidationError(f"layer {name!r}: {e}") from e
        elif kind == KIND_RELU:
            layers.append(ReLU())
        elif kind == KIND_MAXPOOL:
            layers.append(MaxPool2x2())
        else:
            raise FormatError(f"unknown layer kind tag {kind} for layer {name!r}")
        names.append(name)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after layer table")
    return WeightBundle(model_name, preprocess, layers, names)


def atomic_write_bytes(data: bytes, path) -> None:
    """Write to a temp file in the target directory, then rename into place."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".pgtmp-")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def save_bundle(bundle: WeightBundle, path) -> None:
    atomic_write_bytes(bundle_to_bytes(bundle), path)


def load_bundle(path) -> WeightBundle:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return bundle_from_bytes(data)


# ---------------------------------------------------------------------------
# Preprocessing


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers; (H, W, C) float32 in and out."""
    img = np.asarray(img, dtype=np.float32)
    in_h, in_w = img.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()

    def _axis(n_in, n_out):
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * n_in / n_out - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = (src - lo).astype(np.float32)
        return lo, hi, frac

    y0, y1, wy = _axis(in_h, out_h)
    x0, x1, wx = _axis(in_w, out_w)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def preprocess_image(raw: np.ndarray, pre: Preprocess) -> Tensor:
    """Resize, scale, reorder channels and normalize an 8-bit RGB image."""
    arr = np.asarray(raw)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) RGB image, got shape {arr.shape}")
    arr = resize_bilinear(arr.astype(np.float32), *pre.target_size)
    arr = arr * np.float32(pre.scale)
    if pre.channel_order == "BGR":
        arr = arr[:, :, ::-1]
    mean = np.asarray(pre.channel_mean, dtype=np.float32)
    std = np.asarray(pre.channel_std, dtype=np.float32)
    arr = (arr - mean) / std
    return Tensor(np.moveaxis(arr, 2, 0))
