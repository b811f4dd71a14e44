"""Command-line front end: calibrate / detect / eval / layer-scan /
make-testset / inspect-weights.

Exit codes: 0 success (detect: all clean), 2 detect found at least one
perturbed image, 1 input or config error, 64 usage error. Machine-readable
output (JSON, JSON-lines, CSV) goes to stdout; diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .bundle import load_bundle
from .calibration import calibrate, collect_clean_indicators, load_profile, save_profile
from .dataset import (
    FilePatch,
    HighContrastNoise,
    PatchSpec,
    SolidColor,
    build_balanced_testset,
    read_manifest,
    write_manifest,
)
from .detector import DetectionFailure, Verdict, detect_batch
from .errors import ConfigError, PatchGuardError
from .evaluation import export_histogram, layer_scan, recommend_layer, score
from .tensor import Conv, MaxPool2x2, ReLU

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PERTURBED = 2
EXIT_USAGE = 64

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _list_images(directory):
    if not os.path.isdir(directory):
        raise ConfigError(f"not a directory: {directory}")
    paths = [
        os.path.join(directory, name)
        for name in sorted(os.listdir(directory))
        if name.lower().endswith(IMAGE_EXTENSIONS)
    ]
    if not paths:
        raise ConfigError(f"no images found in {directory}")
    return paths


def _weights_path(args):
    path = args.weights or os.environ.get("PATCHGUARD_WEIGHTS")
    if not path:
        raise ConfigError("no weights given (use --weights or PATCHGUARD_WEIGHTS)")
    return path


def _default_jobs():
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patchguard", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="compute a threshold from clean images")
    p.add_argument("--weights", default=None)
    p.add_argument("--layer", required=True)
    p.add_argument("--tap", choices=("pre", "post"), default="post")
    p.add_argument("--p", type=float, default=0.95)
    p.add_argument("--images", required=True, help="directory of clean images")
    p.add_argument("--out", required=True, help="profile file to write")

    p = sub.add_parser("detect", help="classify images as clean or perturbed")
    p.add_argument("--weights", default=None)
    p.add_argument("--profile", required=True)
    p.add_argument("--json", action="store_true", help="JSON-lines output")
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("images", nargs="+")

    p = sub.add_parser("eval", help="score detection against a labeled manifest")
    p.add_argument("--weights", default=None)
    p.add_argument("--profile", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True, help="JSON report file to write")
    p.add_argument("--jobs", type=int, default=_default_jobs())

    p = sub.add_parser("layer-scan", help="compare indicator separation per layer")
    p.add_argument("--weights", default=None)
    p.add_argument("--clean", required=True, help="directory of clean images")
    p.add_argument("--perturbed", required=True, help="directory of attacked images")
    p.add_argument("--layers", required=True, help="comma-separated conv layer names")
    p.add_argument("--tap", choices=("pre", "post"), default="post")
    p.add_argument("--out", required=True, help="histogram CSV to write")

    p = sub.add_parser("make-testset", help="build a balanced attacked/clean set")
    p.add_argument("--images", required=True, help="directory of source images")
    p.add_argument(
        "--patch",
        default="noise",
        help="'noise', 'solid' or a patch image file path",
    )
    p.add_argument("--area", type=float, default=0.06)
    p.add_argument("--side", type=int, default=None, help="absolute patch side override")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("inspect-weights", help="describe a weight bundle")
    p.add_argument("--weights", default=None)

    return parser


def _cmd_calibrate(args) -> int:
    bundle = load_bundle(_weights_path(args))
    paths = _list_images(args.images)
    samples, errors = collect_clean_indicators(paths, bundle, args.layer, args.tap)
    for sid, msg in errors:
        print(f"warning: skipped {sid}: {msg}", file=sys.stderr)
    profile = calibrate(
        samples,
        args.p,
        model_name=bundle.model_name,
        layer=str(args.layer),
        tap=args.tap,
    )
    save_profile(profile, args.out)
    print(
        json.dumps(
            {
                "theta": profile.theta,
                "confidence_p": profile.confidence_p,
                "achieved_fraction": profile.achieved_fraction,
                "n_samples": profile.n_samples,
                "profile": args.out,
            }
        )
    )
    return EXIT_OK


def _cmd_detect(args) -> int:
    bundle = load_bundle(_weights_path(args))
    profile = load_profile(args.profile)
    results = detect_batch(args.images, bundle, profile, parallelism=args.jobs)
    failures = 0
    perturbed = 0
    for r in results:
        if isinstance(r, DetectionFailure):
            failures += 1
            print(f"error: {r.source_id}: {r.message}", file=sys.stderr)
            continue
        if r.verdict == Verdict.PERTURBED:
            perturbed += 1
        if args.json:
            print(
                json.dumps(
                    {
                        "source_id": r.source_id,
                        "verdict": r.verdict.value,
                        "indicator": r.indicator,
                        "theta": r.theta,
                        "margin": r.margin,
                        "layer": r.layer,
                    }
                )
            )
        else:
            print(
                f"{r.source_id}\t{r.verdict.value}\t"
                f"indicator={r.indicator:.6g}\ttheta={r.theta:.6g}"
            )
    if failures:
        return EXIT_ERROR
    return EXIT_PERTURBED if perturbed else EXIT_OK


def _cmd_eval(args) -> int:
    bundle = load_bundle(_weights_path(args))
    profile = load_profile(args.profile)
    samples = read_manifest(args.manifest)
    results = detect_batch(
        [s.path for s in samples], bundle, profile, parallelism=args.jobs
    )
    ok_results = []
    for s, r in zip(samples, results):
        if isinstance(r, DetectionFailure):
            raise ConfigError(f"manifest image failed: {r.source_id}: {r.message}")
        # rekey by manifest source_id so labels align
        ok_results.append(
            type(r)(
                verdict=r.verdict,
                indicator=r.indicator,
                theta=r.theta,
                margin=r.margin,
                layer=r.layer,
                source_id=s.source_id,
            )
        )
    report = score(ok_results, samples)
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    from .bundle import atomic_write_bytes

    atomic_write_bytes(payload.encode("utf-8") + b"\n", args.report)
    print(payload)
    return EXIT_OK


def _cmd_layer_scan(args) -> int:
    bundle = load_bundle(_weights_path(args))
    layers = [s.strip() for s in args.layers.split(",") if s.strip()]
    report = layer_scan(
        _list_images(args.clean),
        _list_images(args.perturbed),
        bundle,
        layers,
        tap=args.tap,
    )
    export_histogram(report, args.out)
    print(
        json.dumps(
            {
                "overlaps": {e.layer: e.overlap for e in report.entries},
                "recommended_layer": recommend_layer(report),
                "histogram": args.out,
            }
        )
    )
    return EXIT_OK


def _make_patch_spec(args) -> PatchSpec:
    if args.patch == "noise":
        content = HighContrastNoise(seed=args.seed)
    elif args.patch == "solid":
        content = SolidColor()
    elif os.path.isfile(args.patch):
        content = FilePatch(args.patch)
    else:
        raise ConfigError(f"--patch must be 'noise', 'solid' or an image file, got {args.patch!r}")
    return PatchSpec(
        area_fraction=args.area, content=content, side_override=args.side
    )


def _cmd_make_testset(args) -> int:
    paths = _list_images(args.images)
    spec = _make_patch_spec(args)
    out_images = os.path.join(args.out, "patched")
    samples = build_balanced_testset(paths, spec, args.seed, out_images)
    manifest_path = os.path.join(args.out, "manifest.tsv")
    write_manifest(samples, manifest_path)
    n_pos = sum(1 for s in samples if s.placement is not None)
    print(
        json.dumps(
            {
                "manifest": manifest_path,
                "n_total": len(samples),
                "n_positive": n_pos,
                "n_negative": len(samples) - n_pos,
            }
        )
    )
    return EXIT_OK


def _cmd_inspect_weights(args) -> int:
    bundle = load_bundle(_weights_path(args))
    layers = []
    for name, op in zip(bundle.layer_names, bundle.layers):
        if isinstance(op, Conv):
            layers.append(
                {
                    "name": name,
                    "kind": "conv3x3",
                    "in_channels": op.spec.in_channels,
                    "out_channels": op.spec.out_channels,
                }
            )
        elif isinstance(op, ReLU):
            layers.append({"name": name, "kind": "relu"})
        elif isinstance(op, MaxPool2x2):
            layers.append({"name": name, "kind": "maxpool2x2"})
    pre = bundle.preprocess
    print(
        json.dumps(
            {
                "model_name": bundle.model_name,
                "preprocess": {
                    "target_size": list(pre.target_size),
                    "scale": pre.scale,
                    "channel_mean": list(pre.channel_mean),
                    "channel_std": list(pre.channel_std),
                    "channel_order": pre.channel_order,
                },
                "layers": layers,
            },
            indent=2,
        )
    )
    return EXIT_OK


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "layer-scan": _cmd_layer_scan,
    "make-testset": _cmd_make_testset,
    "inspect-weights": _cmd_inspect_weights,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except PatchGuardError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
