"""Backbone registry and prefix freezing over ordered feature-extractor groups.

Every backbone exposes an ordered list of feature-extractor parameter groups
plus a classifier head.  "Freeze fraction f" freezes the largest prefix of
groups whose cumulative parameter count stays within f of the extractor total;
the head always stays trainable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch
from torch import nn


class BackboneError(ValueError):
    pass


@dataclass(frozen=True)
class BackboneConfig:
    architecture_id: str = "tiny"
    pretrained: bool = False
    freeze_fraction: float = 0.0
    num_classes: int = 26

    def __post_init__(self) -> None:
        if not 0.0 <= self.freeze_fraction <= 1.0:
            raise BackboneError(f"freeze_fraction must be in [0, 1], got {self.freeze_fraction}")
        if self.num_classes < 2:
            raise BackboneError(f"num_classes must be at least 2, got {self.num_classes}")

    def to_dict(self) -> dict:
        return {
            "architecture_id": self.architecture_id,
            "pretrained": self.pretrained,
            "freeze_fraction": self.freeze_fraction,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BackboneConfig":
        return cls(**data)


class GroupedClassifier(nn.Module):
    """Classifier with an ordered feature-extractor/head parameter partition."""

    def feature_groups(self) -> list[tuple[str, list[nn.Parameter]]]:
        raise NotImplementedError

    def head_parameters(self) -> list[nn.Parameter]:
        raise NotImplementedError


class TinyCNN(GroupedClassifier):
    """Three conv blocks plus a linear head; runs anywhere, no pretraining."""

    def __init__(self, num_classes: int, width: int = 16):
        super().__init__()
        w = width
        self.block1 = nn.Sequential(
            nn.Conv2d(3, w, 3, padding=1), nn.BatchNorm2d(w), nn.ReLU(), nn.MaxPool2d(2)
        )
        self.block2 = nn.Sequential(
            nn.Conv2d(w, 2 * w, 3, padding=1), nn.BatchNorm2d(2 * w), nn.ReLU(), nn.MaxPool2d(2)
        )
        self.block3 = nn.Sequential(
            nn.Conv2d(2 * w, 4 * w, 3, padding=1), nn.BatchNorm2d(4 * w), nn.ReLU(), nn.AdaptiveAvgPool2d(1)
        )
        self.head = nn.Linear(4 * w, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.block3(self.block2(self.block1(x)))
        return self.head(torch.flatten(x, 1))

    def feature_groups(self) -> list[tuple[str, list[nn.Parameter]]]:
        return [
            ("block1", list(self.block1.parameters())),
            ("block2", list(self.block2.parameters())),
            ("block3", list(self.block3.parameters())),
        ]

    def head_parameters(self) -> list[nn.Parameter]:
        return list(self.head.parameters())


class TorchvisionBackbone(GroupedClassifier):
    """Adapter exposing a torchvision classifier through the grouped interface."""

    def __init__(self, model: nn.Module, feature_children: list[tuple[str, nn.Module]], head: nn.Module):
        super().__init__()
        self.model = model
        self._feature_children = feature_children
        self._head = head

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.model(x)

    def feature_groups(self) -> list[tuple[str, list[nn.Parameter]]]:
        groups = []
        for name, module in self._feature_children:
            params = [p for p in module.parameters()]
            if params:
                groups.append((name, params))
        return groups

    def head_parameters(self) -> list[nn.Parameter]:
        return list(self._head.parameters())


def _resnet(variant: str) -> Callable[[int, bool], GroupedClassifier]:
    def factory(num_classes: int, pretrained: bool) -> GroupedClassifier:
        from torchvision import models

        builder = getattr(models, variant)
        model = builder(weights="DEFAULT" if pretrained else None)
        model.fc = nn.Linear(model.fc.in_features, num_classes)
        feature_children = [(name, module) for name, module in model.named_children() if name != "fc"]
        return TorchvisionBackbone(model, feature_children, model.fc)

    return factory


def _efficientnet(variant: str) -> Callable[[int, bool], GroupedClassifier]:
    def factory(num_classes: int, pretrained: bool) -> GroupedClassifier:
        from torchvision import models

        builder = getattr(models, variant)
        model = builder(weights="DEFAULT" if pretrained else None)
        in_features = model.classifier[-1].in_features
        model.classifier[-1] = nn.Linear(in_features, num_classes)
        feature_children = [(f"features.{i}", block) for i, block in enumerate(model.features)]
        return TorchvisionBackbone(model, feature_children, model.classifier)

    return factory


def _vgg(variant: str) -> Callable[[int, bool], GroupedClassifier]:
    def factory(num_classes: int, pretrained: bool) -> GroupedClassifier:
        from torchvision import models

        builder = getattr(models, variant)
        model = builder(weights="DEFAULT" if pretrained else None)
        in_features = model.classifier[-1].in_features
        model.classifier[-1] = nn.Linear(in_features, num_classes)
        feature_children = [(f"features.{i}", block) for i, block in enumerate(model.features)]
        return TorchvisionBackbone(model, feature_children, model.classifier)

    return factory


def _vit(num_classes: int, pretrained: bool) -> GroupedClassifier:
    from torchvision import models

    model = models.vit_b_16(weights="DEFAULT" if pretrained else None)
    in_features = model.heads.head.in_features
    model.heads.head = nn.Linear(in_features, num_classes)
    feature_children = [("conv_proj", model.conv_proj)]
    feature_children += [(f"encoder.layer_{i}", layer) for i, layer in enumerate(model.encoder.layers)]
    feature_children.append(("encoder.ln", model.encoder.ln))
    return TorchvisionBackbone(model, feature_children, model.heads)


BACKBONES: dict[str, Callable[[int, bool], GroupedClassifier]] = {
    "tiny": lambda num_classes, pretrained: TinyCNN(num_classes),
    "resnet18": _resnet("resnet18"),
    "resnet50": _resnet("resnet50"),
    "resnet152": _resnet("resnet152"),
    "efficientnet_b0": _efficientnet("efficientnet_b0"),
    "efficientnet_b3": _efficientnet("efficientnet_b3"),
    "vgg11": _vgg("vgg11"),
    "vgg16": _vgg("vgg16"),
    "vit_b_16": _vit,
}


def list_backbones() -> list[str]:
    return sorted(BACKBONES)


def build_backbone(config: BackboneConfig) -> GroupedClassifier:
    try:
        factory = BACKBONES[config.architecture_id]
    except KeyError:
        raise BackboneError(
            f"unknown backbone {config.architecture_id!r}; available: {list_backbones()}"
        )
    if config.architecture_id == "tiny" and config.pretrained:
        raise BackboneError("the tiny test backbone has no pretrained weights")
    try:
        return factory(config.num_classes, config.pretrained)
    except Exception as exc:
        if config.pretrained:
            raise BackboneError(
                f"could not load pretrained weights for {config.architecture_id!r}: {exc}. "
                "Pretrained weights need a one-time download; pass pretrained=False to train from scratch."
            ) from exc
        raise


@dataclass(frozen=True)
class FreezeReport:
    requested_fraction: float
    achieved_fraction: float
    frozen_groups: tuple[str, ...]
    frozen_parameters: int
    total_feature_parameters: int


def freeze_parameters(model: GroupedClassifier, freeze_fraction: float) -> FreezeReport:
    """Freeze the largest group prefix whose parameter count fits the fraction."""
    if not 0.0 <= freeze_fraction <= 1.0:
        raise BackboneError(f"freeze_fraction must be in [0, 1], got {freeze_fraction}")
    if not isinstance(model, GroupedClassifier):
        raise BackboneError(
            f"{type(model).__name__} does not expose a feature-extractor/head partition; "
            "wrap it as a GroupedClassifier"
        )
    groups = model.feature_groups()
    sizes = [sum(p.numel() for p in params) for _, params in groups]
    total = sum(sizes)
    if total == 0:
        raise BackboneError("model has no feature-extractor parameters")

    budget = freeze_fraction * total
    frozen_names: list[str] = []
    frozen_count = 0
    prefix_open = True
    for (name, params), size in zip(groups, sizes):
        if prefix_open and frozen_count + size <= budget + 1e-9:
            frozen_count += size
            frozen_names.append(name)
            for p in params:
                p.requires_grad_(False)
        else:
            prefix_open = False
            for p in params:
                p.requires_grad_(True)
    for p in model.head_parameters():
        p.requires_grad_(True)

    return FreezeReport(
        requested_fraction=freeze_fraction,
        achieved_fraction=frozen_count / total,
        frozen_groups=tuple(frozen_names),
        frozen_parameters=frozen_count,
        total_feature_parameters=total,
    )
