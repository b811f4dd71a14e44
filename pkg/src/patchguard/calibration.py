"""Clean-only threshold calibration: the detection threshold is the smallest
order statistic of clean-sample indicator values covering at least fraction p
of them, persisted as a single-scalar deployable profile."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .attention import indicator_at_layer
from .bundle import WeightBundle, atomic_write_bytes, preprocess_image
from .errors import ConfigError, FormatError, InputError, IoError, ValidationError
from .images import load_image


@dataclass(frozen=True)
class IndicatorSample:
    value: float
    source_id: str

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError(
                f"non-finite indicator value for sample {self.source_id!r}"
            )


@dataclass(frozen=True)
class CalibrationProfile:
    """The deployable calibration artifact: one scalar threshold."""

    model_name: str
    layer: str
    tap: str
    confidence_p: float
    theta: float
    n_samples: int
    created_at: str
    achieved_fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.confidence_p <= 1.0:
            raise ValidationError(f"confidence_p {self.confidence_p} not in (0, 1]")
        if not math.isfinite(self.theta):
            raise ValidationError("theta must be finite")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        # keep the persisted scalars at f32 precision everywhere
        object.__setattr__(self, "theta", float(np.float32(self.theta)))
        object.__setattr__(
            self, "confidence_p", float(np.float32(self.confidence_p))
        )


def calibrate_theta(values, p: float):
    """Threshold at confidence p over clean indicator values.

    Returns (theta, achieved_fraction): theta is the ceil(p*N)-th order
    statistic (1-indexed, ascending), the smallest order statistic with
    at-least-p coverage; achieved_fraction is the exact coverage it attains
    (ties can push it above p).
    """
    vals = np.asarray(list(values), dtype=np.float32)
    if vals.size == 0:
        raise ConfigError("calibration needs at least one sample")
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"confidence p={p} not in (0, 1]")
    if not np.isfinite(vals).all():
        raise ConfigError("calibration samples contain non-finite values")
    n = vals.size
    k = math.ceil(p * n)
    ordered = np.sort(vals)
    theta = float(ordered[k - 1])
    achieved = float(np.count_nonzero(vals <= np.float32(theta))) / n
    return theta, achieved


def calibrate(
    samples,
    p: float,
    *,
    model_name: str = "",
    layer: str = "",
    tap: str = "post",
    created_at: str | None = None,
) -> CalibrationProfile:
    """Build a CalibrationProfile from clean IndicatorSamples at confidence p."""
    samples = list(samples)
    theta, achieved = calibrate_theta((s.value for s in samples), p)
    if created_at is None:
        created_at = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return CalibrationProfile(
        model_name=model_name,
        layer=layer,
        tap=tap,
        confidence_p=p,
        theta=theta,
        n_samples=len(samples),
        created_at=created_at,
        achieved_fraction=achieved,
    )


def collect_clean_indicators(image_paths, bundle: WeightBundle, layer, tap="post"):
    """Indicator per image, in input order.

    Returns (samples, errors); per-image decode failures land in errors as
    (source_id, message) pairs instead of aborting the run. Raises only when
    no image at all was usable.
    """
    paths = list(image_paths)
    if not paths:
        raise ConfigError("no calibration images given")
    samples, errors = [], []
    for path in paths:
        sid = str(path)
        try:
            raw = load_image(path)
            tensor = preprocess_image(raw, bundle.preprocess)
            value = indicator_at_layer(tensor, bundle, layer, tap)
            if not math.isfinite(value):
                raise InputError(f"non-finite indicator for {sid}")
            samples.append(IndicatorSample(value=value, source_id=sid))
        except ConfigError:
            raise  # bad layer/tap is a caller bug, not an image problem
        except Exception as e:
            errors.append((sid, str(e)))
    if not samples:
        raise InputError(
            f"no usable calibration images ({len(errors)} failures, "
            f"first: {errors[0][1]})"
        )
    return samples, errors


# ---------------------------------------------------------------------------
# Profile persistence: flat UTF-8 `key = value` text; floats carried both as
# decimal (for humans) and as IEEE-754 f32 hex bit pattern (authoritative).

_F32_KEYS = ("confidence_p", "theta", "achieved_fraction")
_REQUIRED_KEYS = (
    "model_name",
    "layer",
    "tap",
    "confidence_p",
    "theta",
    "n_samples",
    "created_at",
)


def _f32_to_hex(v: float) -> str:
    return "0x%08X" % struct.unpack("<I", struct.pack("<f", v))[0]


def _hex_to_f32(s: str) -> float:
    try:
        bits = int(s, 16)
    except ValueError as e:
        raise FormatError(f"bad float bit pattern {s!r}") from e
    if not 0 <= bits <= 0xFFFFFFFF:
        raise FormatError(f"float bit pattern {s!r} out of 32-bit range")
    return struct.unpack("<f", struct.pack("<I", bits))[0]


def profile_to_text(profile: CalibrationProfile) -> str:
    lines = [
        f"model_name = {profile.model_name}",
        f"layer = {profile.layer}",
        f"tap = {profile.tap}",
        f"confidence_p = {profile.confidence_p!r}",
        f"confidence_p_hex = {_f32_to_hex(profile.confidence_p)}",
        f"theta = {profile.theta!r}",
        f"theta_hex = {_f32_to_hex(profile.theta)}",
        f"achieved_fraction = {profile.achieved_fraction!r}",
        f"achieved_fraction_hex = {_f32_to_hex(profile.achieved_fraction)}",
        f"n_samples = {profile.n_samples}",
        f"created_at = {profile.created_at}",
    ]
    return "\n".join(lines) + "\n"


def profile_from_text(text: str) -> CalibrationProfile:
    kv = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    for key in _REQUIRED_KEYS:
        if key not in kv:
            raise ValidationError(key)

    def f32_field(key):
        hex_key = key + "_hex"
        if hex_key in kv:
            return float(np.float32(_hex_to_f32(kv[hex_key])))
        try:
            return float(np.float32(float(kv[key])))
        except ValueError as e:
            raise FormatError(f"bad float for {key}: {kv[key]!r}") from e

    try:
        n_samples = int(kv["n_samples"])
    except ValueError as e:
        raise FormatError(f"bad n_samples: {kv['n_samples']!r}") from e
    return CalibrationProfile(
        model_name=kv["model_name"],
        layer=kv["layer"],
        tap=kv["tap"],
        confidence_p=f32_field("confidence_p"),
        theta=f32_field("theta"),
        n_samples=n_samples,
        created_at=kv["created_at"],
        achieved_fraction=f32_field("achieved_fraction")
        if "achieved_fraction" in kv
        else 1.0,
    )


def save_profile(profile: CalibrationProfile, path) -> None:
    atomic_write_bytes(profile_to_text(profile).encode("utf-8"), path)


def load_profile(path) -> CalibrationProfile:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return profile_from_text(text)
