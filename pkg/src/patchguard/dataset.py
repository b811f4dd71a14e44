"""Evaluation-corpus construction: deterministic analysis/test splits,
synthetic square-patch application and balanced labeled test sets.

All randomness flows through per-item streams derived from (seed, source_id),
so parallel patch application cannot change any output.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .bundle import resize_bilinear
from .errors import ConfigError
from .images import load_image, save_image

LABEL_POSITIVE = "positive"  # attacked
LABEL_NEGATIVE = "negative"  # clean


def _stable_hash(token: str) -> int:
    return int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")


def derive_rng(seed: int, *tokens: str) -> np.random.Generator:
    """Independent RNG stream for (seed, tokens); order-insensitive across items."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF] + [_stable_hash(t) for t in tokens])


# ---------------------------------------------------------------------------
# Splitting


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    fractions: tuple = (0.4, 0.6)  # (analysis, test)
    stratify_key: dict | None = None  # source_id -> class label

    def __post_init__(self):
        a, t = self.fractions
        if a <= 0 or t <= 0:
            raise ConfigError(f"split fractions must be positive, got {self.fractions}")
        if abs(a + t - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {a + t}")


def split(image_ids, spec: SplitSpec):
    """Disjoint, exhaustive (analysis, test) partition; deterministic for a
    fixed seed; per-class sizes within one item of the target when stratified."""
    ids = [str(i) for i in image_ids]
    if not ids:
        raise ConfigError("cannot split an empty id list")
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate ids in split input")

    groups: dict = {}
    if spec.stratify_key is None:
        groups[""] = list(ids)
    else:
        for i in ids:
            groups.setdefault(str(spec.stratify_key.get(i, "")), []).append(i)

    frac_analysis = spec.fractions[0]
    analysis, test = [], []
    for label in sorted(groups):
        members = sorted(groups[label])
        rng = derive_rng(spec.seed, "split", label)
        rng.shuffle(members)
        k = int(math.floor(frac_analysis * len(members) + 0.5))
        analysis.extend(members[:k])
        test.extend(members[k:])
    # report in original input order
    a_set = set(analysis)
    analysis = [i for i in ids if i in a_set]
    test = [i for i in ids if i not in a_set]
    return analysis, test


# ---------------------------------------------------------------------------
# Patch application


@dataclass(frozen=True)
class FilePatch:
    path: str


@dataclass(frozen=True)
class HighContrastNoise:
    seed: int = 0


@dataclass(frozen=True)
class SolidColor:
    rgb: tuple = (255, 255, 255)


@dataclass(frozen=True)
class UniformRandom:
    seed: int = 0


@dataclass(frozen=True)
class Fixed:
    x: int
    y: int


@dataclass(frozen=True)
class PatchSpec:
    area_fraction: float = 0.06
    content: object = field(default_factory=HighContrastNoise)
    placement: object = field(default_factory=UniformRandom)
    side_override: int | None = None  # e.g. 54 to match a fixed absolute size

    def __post_init__(self):
        if not 0.0 < self.area_fraction < 1.0:
            raise ConfigError(
                f"area_fraction must be in (0, 1), got {self.area_fraction}"
            )

    def describe_content(self) -> str:
        if isinstance(self.content, FilePatch):
            return f"file:{os.path.basename(self.content.path)}"
        if isinstance(self.content, HighContrastNoise):
            return "noise"
        if isinstance(self.content, SolidColor):
            return "solid"
        return type(self.content).__name__


@dataclass(frozen=True)
class PlacementRecord:
    x: int
    y: int
    side: int


def patch_side(spec: PatchSpec, height: int, width: int) -> int:
    if spec.side_override is not None:
        side = int(spec.side_override)
    else:
        side = int(round(math.sqrt(spec.area_fraction * height * width)))
    if side < 1:
        raise ConfigError(f"patch side {side} < 1 for {height}x{width} image")
    if side > height or side > width:
        raise ConfigError(f"patch side {side} exceeds image {height}x{width}")
    return side


def _patch_pixels(content, side: int, source_id: str) -> np.ndarray:
    if isinstance(content, SolidColor):
        out = np.empty((side, side, 3), dtype=np.uint8)
        out[:] = np.asarray(content.rgb, dtype=np.uint8)
        return out
    if isinstance(content, HighContrastNoise):
        # black/white per pixel (all channels equal) so the contrast survives
        # channel averaging downstream
        rng = derive_rng(content.seed, "patch-content", source_id)
        speckle = (rng.integers(0, 2, size=(side, side, 1)) * 255).astype(np.uint8)
        return np.repeat(speckle, 3, axis=2)
    if isinstance(content, FilePatch):
        raw = load_image(content.path).astype(np.float32)
        resized = resize_bilinear(raw, side, side)
        return np.clip(np.rint(resized), 0, 255).astype(np.uint8)
    raise ConfigError(f"unknown patch content {content!r}")


def apply_patch(image: np.ndarray, spec: PatchSpec, source_id: str = ""):
    """Overwrite one square region; every other pixel stays bit-identical.

    Returns (patched uint8 copy, PlacementRecord).
    """
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape[:2]
    side = patch_side(spec, h, w)
    if isinstance(spec.placement, Fixed):
        x, y = spec.placement.x, spec.placement.y
        if x < 0 or y < 0 or x + side > w or y + side > h:
            raise ConfigError(
                f"fixed placement ({x},{y}) with side {side} outside {h}x{w}"
            )
    else:
        rng = derive_rng(spec.placement.seed, "patch-place", source_id)
        x = int(rng.integers(0, w - side + 1))
        y = int(rng.integers(0, h - side + 1))
    patched = img.copy()
    patched[y : y + side, x : x + side] = _patch_pixels(spec.content, side, source_id)
    return patched, PlacementRecord(x=x, y=y, side=side)


# ---------------------------------------------------------------------------
# Balanced labeled test sets


@dataclass(frozen=True)
class LabeledSample:
    source_id: str
    path: str  # image file to run detection on
    label: str  # LABEL_POSITIVE or LABEL_NEGATIVE
    source: str = "-"  # patch provenance descriptor, "-" for clean
    placement: PlacementRecord | None = None

    def __post_init__(self):
        if self.label not in (LABEL_POSITIVE, LABEL_NEGATIVE):
            raise ConfigError(f"bad label {self.label!r}")
        if (self.label == LABEL_POSITIVE) != (self.placement is not None):
            raise ConfigError("positive samples carry provenance, negatives do not")


def build_balanced_testset(test_ids, spec: PatchSpec, seed: int, out_dir):
    """Patch a deterministic half of the given image files and write the
    attacked copies to out_dir; returns labeled samples (positives first as
    chosen, order follows the input list)."""
    ids = [str(i) for i in test_ids]
    if len(ids) < 2:
        raise ConfigError("balanced test set needs at least 2 images")
    os.makedirs(out_dir, exist_ok=True)

    order = sorted(ids)
    derive_rng(seed, "balance").shuffle(order)
    positives = set(order[: len(ids) // 2])

    samples = []
    for path in ids:
        sid = os.path.basename(path)
        if path in positives:
            image = load_image(path)
            patched, placement = apply_patch(image, spec, source_id=sid)
            stem, _ = os.path.splitext(sid)
            out_path = os.path.join(out_dir, f"{stem}__patched.png")
            save_image(patched, out_path)
            samples.append(
                LabeledSample(
                    source_id=sid,
                    path=out_path,
                    label=LABEL_POSITIVE,
                    source=spec.describe_content(),
                    placement=placement,
                )
            )
        else:
            samples.append(
                LabeledSample(source_id=sid, path=path, label=LABEL_NEGATIVE)
            )
    return samples


# ---------------------------------------------------------------------------
# Manifest: one tab-separated record per line, UTF-8.
# Columns: source_id, path, label, source, x, y, side  ("-" where absent)

MANIFEST_COLUMNS = 7


def manifest_to_text(samples) -> str:
    lines = []
    for s in samples:
        if s.placement is None:
            x = y = side = "-"
        else:
            x, y, side = s.placement.x, s.placement.y, s.placement.side
        lines.append(
            "\t".join(str(v) for v in (s.source_id, s.path, s.label, s.source, x, y, side))
        )
    return "\n".join(lines) + ("\n" if lines else "")


def manifest_from_text(text: str):
    samples = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != MANIFEST_COLUMNS:
            raise ConfigError(
                f"manifest line {lineno}: expected {MANIFEST_COLUMNS} columns, "
                f"got {len(cols)}"
            )
        sid, path, label, source, x, y, side = cols
        placement = None
        if x != "-":
            placement = PlacementRecord(x=int(x), y=int(y), side=int(side))
        samples.append(
            LabeledSample(
                source_id=sid, path=path, label=label, source=source, placement=placement
            )
        )
    return samples


def write_manifest(samples, path) -> None:
    from .bundle import atomic_write_bytes

    atomic_write_bytes(manifest_to_text(samples).encode("utf-8"), path)


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as f:
        return manifest_from_text(f.read())
