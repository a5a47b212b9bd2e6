"""Registry of supported image backbones.

Each entry knows how to build the torchvision model and split it into a
penultimate-feature trunk and a classification head.  Weights are either
the torchvision pretrained checkpoint or a deterministic random draw
(fixed per-model seed), so extraction is reproducible even offline.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import torch
from torch import nn
from torchvision import models


class RegistryError(ValueError):
    """Unknown model name or unavailable weights."""


@dataclass(frozen=True)
class BackboneParts:
    trunk: nn.Module        # image batch -> penultimate features (N x D)
    head: nn.Module         # penultimate features -> class logits
    feat_dim: int


def _resnet_parts(model):
    trunk = nn.Sequential(*list(model.children())[:-1], nn.Flatten(1))
    return BackboneParts(trunk=trunk, head=model.fc, feat_dim=model.fc.in_features)


_REGISTRY = {
    "resnet18": (models.resnet18, models.ResNet18_Weights.IMAGENET1K_V1, _resnet_parts),
    "resnet34": (models.resnet34, models.ResNet34_Weights.IMAGENET1K_V1, _resnet_parts),
    "resnet50": (models.resnet50, models.ResNet50_Weights.IMAGENET1K_V1, _resnet_parts),
}


def model_names():
    return sorted(_REGISTRY)


def weight_seed(name: str) -> int:
    """Stable per-model seed for the random-weights mode."""
    return zlib.crc32(name.encode())


def build_backbone(name: str, weights: str = "pretrained") -> BackboneParts:
    if name not in _REGISTRY:
        raise RegistryError(
            f"unknown model {name!r}; registry has {', '.join(model_names())}"
        )
    builder, pretrained_weights, split = _REGISTRY[name]
    if weights == "pretrained":
        try:
            model = builder(weights=pretrained_weights)
        except Exception as exc:  # checkpoint download/read failure
            raise RegistryError(
                f"pretrained weights for {name!r} unavailable ({exc}); "
                "pass --weights random for a deterministic offline fallback"
            ) from exc
    elif weights == "random":
        torch.manual_seed(weight_seed(name))
        model = builder(weights=None)
    else:
        raise RegistryError(f"weights must be 'pretrained' or 'random', got {weights!r}")
    model.eval()
    parts = split(model)
    parts.trunk.eval()
    parts.head.eval()
    return parts
