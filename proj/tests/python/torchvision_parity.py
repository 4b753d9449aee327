#!/usr/bin/env python3
"""Compares the pretrained-family feature extractors with torchvision.

Random torchvision networks (with perturbed batch-norm statistics) are saved as
state_dicts, loaded by `parkocc inspect --weights`, and both sides embed the
same images. Exits 77 (skipped) when torch or torchvision is unavailable.
"""

import argparse
import json
import pathlib
import subprocess
import sys

SKIP = 77

FAMILIES = {
    "mobilenetv3_large": ("mobilenet_v3_large", "mobilenet_v3_large_imagenet.pt"),
    "resnet50": ("resnet50", "resnet50_imagenet.pt"),
}


def reference_features(family, model, x):
    import torch

    with torch.no_grad():
        if family == "mobilenetv3_large":
            f = model.features(x)
        else:
            f = model.conv1(x)
            f = model.bn1(f)
            f = model.relu(f)
            f = model.maxpool(f)
            for layer in (model.layer1, model.layer2, model.layer3, model.layer4):
                f = layer(f)
        return f.mean(dim=(2, 3))


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--tool", required=True)
    parser.add_argument("--work", required=True, type=pathlib.Path)
    args = parser.parse_args()

    try:
        import numpy as np
        import torch
        import torchvision
        from PIL import Image
    except ImportError as exc:
        print(f"skipping: {exc}")
        return SKIP

    args.work.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(0)
    rng = np.random.default_rng(0)
    failures = []
    for family, (builder, file_name) in FAMILIES.items():
        model = getattr(torchvision.models, builder)(weights=None)
        for module in model.modules():
            if isinstance(module, torch.nn.BatchNorm2d):
                module.running_mean.uniform_(-0.1, 0.1)
                module.running_var.uniform_(0.5, 1.5)
                with torch.no_grad():
                    module.weight.uniform_(0.5, 1.5)
                    module.bias.uniform_(-0.1, 0.1)
        model.eval()
        weights = args.work / file_name
        torch.save(dict(model.state_dict()), weights)

        probe = subprocess.run([args.tool, "inspect", "--backbone", family, "--weights", str(weights)],
                               capture_output=True, text=True)
        if probe.returncode != 0:
            failures.append(f"{family}: inspect exited {probe.returncode}: {probe.stderr.strip()}")
            continue
        side = json.loads(probe.stdout.strip().splitlines()[-1])["input_size"]

        images = []
        for i in range(2):
            pixels = rng.integers(0, 256, size=(side, side, 3), dtype=np.uint8)
            path = args.work / f"{family}_{i}.png"
            Image.fromarray(pixels, "RGB").save(path)
            images.append((path, pixels))

        command = [args.tool, "inspect", "--backbone", family, "--weights", str(weights), "--names", "--embed"]
        command += [str(p) for p, _ in images]
        result = subprocess.run(command, capture_output=True, text=True)
        if result.returncode != 0:
            failures.append(f"{family}: inspect exited {result.returncode}: {result.stderr.strip()}")
            continue
        report = json.loads(result.stdout.strip().splitlines()[-1])

        if family == "mobilenetv3_large":
            expected_keys = [n for n, _ in model.named_parameters() if n.startswith("features.")]
        else:
            expected_keys = [n for n, _ in model.named_parameters() if not n.startswith("fc.")]
        if report["feature_parameter_keys"] != expected_keys:
            failures.append(f"{family}: parameter keys differ from torchvision")
        feature_params = sum(p.numel() for n, p in model.named_parameters() if n in set(expected_keys))
        if report["total_params"] - report["trainable_params"] != feature_params:
            failures.append(
                f"{family}: frozen parameters {report['total_params'] - report['trainable_params']} "
                f"!= torchvision feature parameters {feature_params}"
            )

        mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
        for (path, pixels), ours in zip(images, report["embeddings"]):
            x = torch.from_numpy(pixels).permute(2, 0, 1).unsqueeze(0).float() / 255.0
            ref = reference_features(family, model, (x - mean) / std)[0]
            ours = torch.tensor(ours)
            if ours.shape != ref.shape:
                failures.append(f"{family}: embedding shape {tuple(ours.shape)} != {tuple(ref.shape)}")
                continue
            if ref.std().item() < 1e-6:
                failures.append(f"{family}: reference embedding of {path.name} is degenerate")
                continue
            err = (ours - ref).abs().max().item() / max(ref.abs().max().item(), 1e-6)
            print(f"{family} {path.name}: relative max error {err:.2e}")
            if err > 1e-4:
                failures.append(f"{family}: embedding of {path.name} differs (relative error {err:.2e})")

    for failure in failures:
        print("FAIL", failure)
    if not failures:
        print("feature extractors match torchvision")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
