#!/usr/bin/env python3
"""Convert a torchvision VGG16 checkpoint into the .oswb weights container.

    python tools/convert_weights.py vgg16.pth vgg16.oswb
    python tools/convert_weights.py --torchvision vgg16.oswb   # downloads IMAGENET1K_V1

Only the 13 convolutions of `features` are kept.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
import oswb  # noqa: E402

# Index of each conv layer inside torchvision's vgg16().features.
FEATURE_INDEX = [0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28]


def convert(state_dict):
    out = {}
    for (name, _cin, _cout), idx in zip(oswb.VGG16_CONVS, FEATURE_INDEX):
        for suffix in ("weight", "bias"):
            key = f"features.{idx}.{suffix}"
            if key not in state_dict:
                raise KeyError(f"checkpoint has no {key}")
            out[f"{name}.{suffix}"] = state_dict[key].detach().cpu().float().numpy()
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("source", nargs="?", help="state dict (.pth) of torchvision.models.vgg16")
    ap.add_argument("output", help="destination .oswb file")
    ap.add_argument("--torchvision", action="store_true", help="fetch the ImageNet weights through torchvision")
    ap.add_argument("--input-side", type=int, default=224)
    args = ap.parse_args()

    import torch

    if args.torchvision:
        import torchvision

        state = torchvision.models.vgg16(weights="IMAGENET1K_V1").state_dict()
    elif args.source:
        state = torch.load(args.source, map_location="cpu")
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
    else:
        ap.error("give a checkpoint path or --torchvision")

    pre = {"input_side": args.input_side, "mean": [0.485, 0.456, 0.406], "std": [0.229, 0.224, 0.225]}
    oswb.write(args.output, convert(state), pre)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
