"""Attention-based adversarial patch detection for shallow CNN prefixes."""

__version__ = "0.1.0"

from .attention import AttentionMap, attention_map, indicator_at_layer, indicator_ir
from .bundle import (
    Preprocess,
    WeightBundle,
    load_bundle,
    preprocess_image,
    save_bundle,
)
from .calibration import (
    CalibrationProfile,
    IndicatorSample,
    calibrate,
    calibrate_theta,
    collect_clean_indicators,
    load_profile,
    save_profile,
)
from .dataset import (
    FilePatch,
    HighContrastNoise,
    LabeledSample,
    PatchSpec,
    SolidColor,
    SplitSpec,
    apply_patch,
    build_balanced_testset,
    split,
)
from .detector import DetectionFailure, DetectionResult, Verdict, detect, detect_batch
from .errors import (
    ConfigError,
    FormatError,
    InputError,
    IoError,
    NumericError,
    PatchGuardError,
    ShapeError,
    ValidationError,
)
from .evaluation import (
    EvalReport,
    LayerScanReport,
    export_histogram,
    layer_scan,
    recommend_layer,
    score,
)
from .tensor import (
    Conv,
    ConvLayerSpec,
    MaxPool2x2,
    ReLU,
    Tensor,
    conv3x3,
    forward_prefix,
    maxpool2x2,
    relu,
)
