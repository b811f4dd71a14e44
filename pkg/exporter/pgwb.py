"""Standalone PGWB writer. Implements the documented byte format directly so
the exporter has no dependency on the detection engine.

Layout (little-endian throughout):
    magic b"PGWB", version u16,
    model_name (u32 length + UTF-8),
    preprocess: target_h u32, target_w u32, scale f32, mean 3*f32, std 3*f32,
                channel_order u8 (0=RGB, 1=BGR),
    layer_count u32,
    per layer: name (u32 length + UTF-8), kind u8 (0=conv, 1=relu, 2=maxpool);
               conv adds in_channels u32, out_channels u32,
               kernel f32[out*in*9], bias f32[out].
"""

import struct

import numpy as np

MAGIC = b"PGWB"
VERSION = 1
KIND_CONV = 0
KIND_RELU = 1
KIND_MAXPOOL = 2


class PgwbWriter:
    def __init__(self, model_name, target_size, scale, mean, std, channel_order="RGB"):
        self.parts = []
        self.layer_parts = []
        self.n_layers = 0
        self._raw(MAGIC)
        self._raw(struct.pack("<H", VERSION))
        self._string(model_name)
        self._raw(struct.pack("<II", target_size[0], target_size[1]))
        self._raw(struct.pack("<f", scale))
        for v in list(mean) + list(std):
            self._raw(struct.pack("<f", v))
        self._raw(struct.pack("<B", 0 if channel_order == "RGB" else 1))

    def _raw(self, b, layer=False):
        (self.layer_parts if layer else self.parts).append(b)

    def _string(self, s, layer=False):
        b = s.encode("utf-8")
        self._raw(struct.pack("<I", len(b)) + b, layer=layer)

    def add_conv(self, name, weight, bias):
        """weight: (out, in, 3, 3) float32, bias: (out,) float32."""
        weight = np.ascontiguousarray(weight, dtype="<f4")
        bias = np.ascontiguousarray(bias, dtype="<f4")
        out_c, in_c, kh, kw = weight.shape
        if (kh, kw) != (3, 3):
            raise ValueError(f"only 3x3 kernels supported, got {kh}x{kw}")
        self._string(name, layer=True)
        self._raw(struct.pack("<B", KIND_CONV), layer=True)
        self._raw(struct.pack("<II", in_c, out_c), layer=True)
        self._raw(weight.tobytes(), layer=True)
        self._raw(bias.tobytes(), layer=True)
        self.n_layers += 1

    def add_relu(self, name):
        self._string(name, layer=True)
        self._raw(struct.pack("<B", KIND_RELU), layer=True)
        self.n_layers += 1

    def add_maxpool(self, name):
        self._string(name, layer=True)
        self._raw(struct.pack("<B", KIND_MAXPOOL), layer=True)
        self.n_layers += 1

    def to_bytes(self):
        return (
            b"".join(self.parts)
            + struct.pack("<I", self.n_layers)
            + b"".join(self.layer_parts)
        )

    def write(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())
