#!/usr/bin/env python3
"""Regenerate tests/data/golden from a weights file, using PyTorch as the reference.

    oneshot synth --out /tmp/corpus --weights-out /tmp/synthetic.oswb
    python tools/make_golden.py /tmp/synthetic.oswb tests/data/golden

The C++ test rebuilds synthetic_vgg16_weights(0) in memory, so the weights file
must come from seed 0. Each image is 64x64, so the target preprocessing adds
no padding and the reference only needs the per-channel normalisation.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parent))
import oswb  # noqa: E402

SIDE = 64


def fixed_images():
    yy, xx = np.mgrid[0:SIDE, 0:SIDE].astype(np.float64)
    gradient = np.stack([xx * 4, yy * 4, (xx + yy) * 2], axis=-1)
    noise = np.random.default_rng(0).integers(0, 256, size=(SIDE, SIDE, 3))
    rings = np.zeros((SIDE, SIDE, 3))
    r = np.hypot(xx - 20.5, yy - 40.5)
    rings[..., 0] = 128 + 127 * np.cos(r / 3.0)
    rings[..., 1] = np.where(r < 12, 230, 60)
    rings[..., 2] = np.where((xx // 8 + yy // 8) % 2 == 0, 200, 30)
    return {
        "gradient": np.clip(gradient, 0, 255).astype(np.uint8),
        "noise": noise.astype(np.uint8),
        "rings": np.clip(rings, 0, 255).astype(np.uint8),
    }


def forward(tensors, x):
    import torch
    import torch.nn.functional as F

    t = torch.from_numpy(x[None]).double()
    blocks = []
    for block, depth in enumerate([2, 2, 3, 3, 3], start=1):
        for i in range(1, depth + 1):
            w = torch.from_numpy(tensors[f"conv{block}_{i}.weight"]).double()
            b = torch.from_numpy(tensors[f"conv{block}_{i}.bias"]).double()
            t = F.relu(F.conv2d(t, w, b, padding=1))
        t = F.max_pool2d(t, 2)
        blocks.append(t[0].numpy().astype(np.float32))
    return blocks


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("weights")
    ap.add_argument("out_dir")
    args = ap.parse_args()

    tensors, pre = oswb.read(args.weights)
    mean = np.array(pre["mean"], dtype=np.float64)[:, None, None]
    std = np.array(pre["std"], dtype=np.float64)[:, None, None]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    manifest = {"weights_seed": 0, "images": []}
    for name, img in fixed_images().items():
        Image.fromarray(img, "RGB").save(out / f"{name}.png")
        x = ((img.transpose(2, 0, 1) / 255.0 - mean) / std).astype(np.float32)
        blocks = forward(tensors, x.astype(np.float64))
        entry = {"name": name, "image": f"{name}.png", "activations": f"{name}.f32", "blocks": []}
        offset = 0
        with open(out / f"{name}.f32", "wb") as f:
            for b in blocks:
                f.write(b.astype("<f4").tobytes())
                entry["blocks"].append({"shape": list(b.shape), "offset": offset})
                offset += b.size
        manifest["images"].append(entry)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"golden data written to {out}")


if __name__ == "__main__":
    main()
