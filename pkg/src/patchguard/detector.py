"""The deployable decision pipeline: image -> preprocess -> shallow forward
-> attention max -> strict comparison against the calibrated threshold."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .attention import indicator_at_layer, resolve_tap_index
from .bundle import WeightBundle, preprocess_image
from .calibration import CalibrationProfile
from .errors import ConfigError, InputError
from .images import load_image


class Verdict(Enum):
    CLEAN = "clean"
    PERTURBED = "perturbed"


@dataclass(frozen=True)
class DetectionResult:
    verdict: Verdict
    indicator: float
    theta: float
    margin: float
    layer: str
    source_id: str


@dataclass(frozen=True)
class DetectionFailure:
    """Per-image failure inside a batch; never aborts the other images."""

    source_id: str
    message: str


def _check_compat(bundle: WeightBundle, profile: CalibrationProfile) -> None:
    if profile.model_name != bundle.model_name:
        raise ConfigError(
            f"profile was calibrated for model {profile.model_name!r} "
            f"but bundle is {bundle.model_name!r}"
        )
    resolve_tap_index(bundle, profile.layer, profile.tap)


def detect(
    raw_image: np.ndarray,
    bundle: WeightBundle,
    profile: CalibrationProfile,
    source_id: str = "",
) -> DetectionResult:
    """Classify one decoded RGB image; perturbed iff indicator strictly
    exceeds the profile threshold (f32 comparison, ties are clean)."""
    _check_compat(bundle, profile)
    tensor = preprocess_image(raw_image, bundle.preprocess)
    indicator = np.float32(
        indicator_at_layer(tensor, bundle, profile.layer, profile.tap)
    )
    theta = np.float32(profile.theta)
    verdict = Verdict.PERTURBED if indicator > theta else Verdict.CLEAN
    return DetectionResult(
        verdict=verdict,
        indicator=float(indicator),
        theta=float(theta),
        margin=float(indicator - theta),
        layer=profile.layer,
        source_id=source_id,
    )


def detect_file(path, bundle, profile) -> DetectionResult:
    return detect(load_image(path), bundle, profile, source_id=str(path))


def detect_batch(paths, bundle, profile, parallelism: int = 1):
    """Detect many image files; results come back in input order and are
    identical regardless of worker count. Per-image failures become
    DetectionFailure entries."""
    if parallelism < 1:
        raise ConfigError(f"parallelism must be >= 1, got {parallelism}")
    paths = list(paths)
    _check_compat(bundle, profile)

    def one(path):
        sid = str(path)
        try:
            return detect(load_image(path), bundle, profile, source_id=sid)
        except ConfigError:
            raise
        except Exception as e:
            return DetectionFailure(source_id=sid, message=str(e))

    if parallelism == 1 or len(paths) <= 1:
        results = [one(p) for p in paths]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, paths))
    if paths and all(isinstance(r, DetectionFailure) for r in results):
        raise InputError(
            f"all {len(paths)} images failed; first: {results[0].message}"
        )
    return results
