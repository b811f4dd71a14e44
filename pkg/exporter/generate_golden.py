#!/usr/bin/env python3
"""Regenerate the committed cross-implementation parity fixtures in ../golden/.

Exports a seeded vgg16 conv1_1..relu1_2 prefix to PGWB, pushes random inputs
through the torch reference, and stores inputs/expected activations as .npy
plus a manifest.json describing the cases.
"""

import json
import os
import sys

import numpy as np
import torch

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from export import export, prefix_modules  # noqa: E402

SEED = 0
BUNDLE_NAME = "vgg16_seed0_prefix.pgwb"


def main():
    golden = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "golden")
    golden = os.path.normpath(golden)
    os.makedirs(golden, exist_ok=True)

    model = export(
        "vgg16", "conv1_2", os.path.join(golden, BUNDLE_NAME), random_seed=SEED
    )
    modules = prefix_modules(model, "conv1_2")

    rng = np.random.default_rng(1)
    cases = []
    specs = [
        ("case0", (3, 8, 8), "conv1_1"),
        ("case1", (3, 8, 8), "relu1_1"),
        ("case2", (3, 8, 8), "relu1_2"),
        ("case3", (3, 16, 12), "relu1_2"),
    ]
    for name, shape, layer in specs:
        x = rng.standard_normal(shape).astype(np.float32)
        with torch.no_grad():
            t = torch.from_numpy(x)[None]
            for mod_name, module in modules:
                t = module(t)
                if mod_name == layer:
                    break
            else:
                raise SystemExit(f"layer {layer} not in exported prefix")
        out = t[0].numpy().astype(np.float32)
        in_file = f"{name}_input.npy"
        out_file = f"{name}_{layer}.npy"
        np.save(os.path.join(golden, in_file), x)
        np.save(os.path.join(golden, out_file), out)
        cases.append({"input": in_file, "output": out_file, "layer": layer})

    manifest = {"bundle": BUNDLE_NAME, "seed": SEED, "cases": cases}
    with open(os.path.join(golden, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(f"wrote {len(cases)} golden cases to {golden}")


if __name__ == "__main__":
    main()
