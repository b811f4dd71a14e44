#!/usr/bin/env python3
"""One-shot converter from a pretrained checkpoint to the PGWB shallow-prefix
format.

    export.py --model vgg16 --upto conv1_2 --out vgg16_prefix.pgwb \
              [--checkpoint vgg16.pth --sha256 <hex>] [--random-seed N]

Only 3x3/stride-1 convolution prefixes fit the PGWB format, which restricts
supported models to the VGG family. Without --checkpoint the architecture is
instantiated with seeded random weights (useful for fixtures and parity
vectors; clearly not a trained model).
"""

import argparse
import hashlib
import sys
import types

import numpy as np
import torch
import torchvision.models as tvm

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# torchvision vgg16().features index -> canonical layer name
VGG16_FEATURE_NAMES = {}


def _build_vgg16_names():
    cfg = [2, 2, 3, 3, 3]  # convs per block
    idx = 0
    for block, n_convs in enumerate(cfg, start=1):
        for conv in range(1, n_convs + 1):
            VGG16_FEATURE_NAMES[idx] = f"conv{block}_{conv}"
            VGG16_FEATURE_NAMES[idx + 1] = f"relu{block}_{conv}"
            idx += 2
        VGG16_FEATURE_NAMES[idx] = f"pool{block}"
        idx += 1


_build_vgg16_names()


class ExportError(Exception):
    pass


class IntegrityError(ExportError):
    pass


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_model(model_name, checkpoint=None, expected_sha256=None, random_seed=0):
    if model_name != "vgg16":
        raise ExportError(
            f"unsupported model {model_name!r}: the PGWB format only carries "
            "3x3/stride-1 conv prefixes, which limits export to the VGG family"
        )
    torch.manual_seed(random_seed)
    if checkpoint is None:
        # features only; skipping the unused classifier head saves seconds
        features = tvm.vgg.make_layers(tvm.vgg.cfgs["D"], batch_norm=False)
        model = types.SimpleNamespace(features=features)
        features.eval()
        return model
    if expected_sha256 is not None:
        actual = sha256_file(checkpoint)
        if actual != expected_sha256.lower():
            raise IntegrityError(
                f"checkpoint hash mismatch: expected {expected_sha256}, got {actual}"
            )
    model = tvm.vgg16(weights=None)
    state = torch.load(checkpoint, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model


def prefix_modules(model, upto):
    """(name, module) pairs through the requested layer, including the ReLU
    that follows a named conv so the post-activation tap is available."""
    named = []
    for i, module in enumerate(model.features):
        name = VGG16_FEATURE_NAMES.get(i)
        if name is None:
            raise ExportError(f"unexpected feature index {i}")
        named.append((name, module))
    names = [n for n, _ in named]
    if upto not in names:
        raise ExportError(f"unknown layer {upto!r} (choose from {', '.join(names)})")
    end = names.index(upto)
    if upto.startswith("conv"):
        end += 1  # trailing ReLU
    return named[: end + 1]


def export(model_name, upto, out_path, checkpoint=None, expected_sha256=None,
           random_seed=0, input_size=224):
    from pgwb import PgwbWriter

    model = build_model(model_name, checkpoint, expected_sha256, random_seed)
    writer = PgwbWriter(
        model_name,
        (input_size, input_size),
        1.0 / 255.0,
        IMAGENET_MEAN,
        IMAGENET_STD,
        "RGB",
    )
    for name, module in prefix_modules(model, upto):
        if isinstance(module, torch.nn.Conv2d):
            if module.kernel_size != (3, 3) or module.stride != (1, 1):
                raise ExportError(f"layer {name} is not a 3x3/stride-1 conv")
            writer.add_conv(
                name,
                module.weight.detach().numpy().astype(np.float32),
                module.bias.detach().numpy().astype(np.float32),
            )
        elif isinstance(module, torch.nn.ReLU):
            writer.add_relu(name)
        elif isinstance(module, torch.nn.MaxPool2d):
            writer.add_maxpool(name)
        else:
            raise ExportError(f"unsupported module at {name}: {type(module).__name__}")
    writer.write(out_path)
    return model


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default="vgg16")
    parser.add_argument("--upto", default="conv1_2", help="last named layer to export")
    parser.add_argument("--out", required=True)
    parser.add_argument("--checkpoint", default=None, help="torch state_dict file")
    parser.add_argument("--sha256", default=None, help="expected checkpoint sha256")
    parser.add_argument(
        "--random-seed",
        type=int,
        default=0,
        help="weight seed when no checkpoint is given",
    )
    parser.add_argument("--input-size", type=int, default=224)
    args = parser.parse_args(argv)
    try:
        export(
            args.model,
            args.upto,
            args.out,
            checkpoint=args.checkpoint,
            expected_sha256=args.sha256,
            random_seed=args.random_seed,
            input_size=args.input_size,
        )
    except ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
