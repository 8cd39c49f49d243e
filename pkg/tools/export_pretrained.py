#!/usr/bin/env python3
"""Convert pretrained torchvision networks into the TorchScript descriptor
files the neural-inference backend consumes.

Not part of the core package contract: it needs torch + torchvision and a
network connection (or a local torchvision weight cache) to fetch weights.
Each exported file takes NCHW float32 input and returns the global-average
pooled final convolutional block.

Usage: python tools/export_pretrained.py --out models/ [--only DenseNet121 ResNet50]
"""
import argparse
from pathlib import Path

import torch

# Registry name -> (torchvision ctor name, weights enum name). The remaining
# registry architectures (Xception, InceptionResNetV2, NASNet*, the V2
# ResNets, the original MobileNet) have no torchvision implementation; export
# them from any source that can produce an equivalent TorchScript module.
TORCHVISION_EXPORTS = {
    "DenseNet121": ("densenet121", "DenseNet121_Weights"),
    "DenseNet201": ("densenet201", "DenseNet201_Weights"),
    "InceptionV3": ("inception_v3", "Inception_V3_Weights"),
    "ResNet50": ("resnet50", "ResNet50_Weights"),
    "ResNet152": ("resnet152", "ResNet152_Weights"),
    "VGG16": ("vgg16", "VGG16_Weights"),
    "VGG19": ("vgg19", "VGG19_Weights"),
}


class PooledFeatures(torch.nn.Module):
    """Wraps a backbone so the output is the pooled final conv block."""

    def __init__(self, features: torch.nn.Module):
        super().__init__()
        self.features = features

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.features(x)
        if out.dim() == 4:
            out = out.mean(dim=(2, 3))
        return out


def build_backbone(name: str) -> torch.nn.Module:
    import torchvision.models as tvm

    ctor_name, weights_name = TORCHVISION_EXPORTS[name]
    weights = getattr(tvm, weights_name).DEFAULT
    model = getattr(tvm, ctor_name)(weights=weights)
    if name.startswith("DenseNet"):
        backbone = model.features
    elif name.startswith("VGG"):
        backbone = model.features
    elif name.startswith("ResNet"):
        backbone = torch.nn.Sequential(*list(model.children())[:-2])
    elif name == "InceptionV3":
        model.aux_logits = False
        backbone = torch.nn.Sequential(*list(model.children())[:-3])
    else:
        raise KeyError(name)
    return PooledFeatures(backbone).eval()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--only", nargs="*", default=None)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    names = args.only or sorted(TORCHVISION_EXPORTS)
    for name in names:
        if name not in TORCHVISION_EXPORTS:
            print(f"skip {name}: no torchvision implementation, export it from another source")
            continue
        module = build_backbone(name)
        example = torch.zeros(1, 3, 224, 224)
        with torch.no_grad():
            traced = torch.jit.trace(module, example)
            dim = traced(example).shape[1]
        path = args.out / f"{name}.pt"
        traced.save(str(path))
        print(f"exported {name} -> {path} (feature dim {dim})")


if __name__ == "__main__":
    main()
