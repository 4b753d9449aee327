#!/usr/bin/env python3
"""Export torchvision ImageNet weights in the layout parkocc loads.

Writes mobilenet_v3_large_imagenet.pt and resnet50_imagenet.pt (state_dicts
saved as plain dicts) into --out. Point PARKOCC_PRETRAINED_DIR at that
directory afterwards.
"""

import argparse
import pathlib
import sys

MODELS = {
    "mobilenet_v3_large_imagenet.pt": ("mobilenet_v3_large", "MobileNet_V3_Large_Weights"),
    "resnet50_imagenet.pt": ("resnet50", "ResNet50_Weights"),
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, type=pathlib.Path, help="output directory")
    parser.add_argument("--only", choices=sorted(MODELS), action="append", help="export a subset")
    args = parser.parse_args()

    try:
        import torch
        import torchvision
    except ImportError as exc:
        print(f"torch and torchvision are required: {exc}", file=sys.stderr)
        return 2

    args.out.mkdir(parents=True, exist_ok=True)
    for file_name in args.only or sorted(MODELS):
        builder_name, weights_name = MODELS[file_name]
        weights = getattr(torchvision.models, weights_name).IMAGENET1K_V1
        model = getattr(torchvision.models, builder_name)(weights=weights)
        target = args.out / file_name
        # a plain dict: the C++ unpickler does not rebuild OrderedDict metadata
        torch.save(dict(model.state_dict()), target)
        print(f"wrote {target} ({sum(p.numel() for p in model.parameters()):,} parameters)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
