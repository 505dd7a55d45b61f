"""Low-rank adapters for linear layers, with trainable-fraction accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


class AdapterError(ValueError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    base_model_id: str = "tiny"
    rank: int = 8
    scaling: float = 16.0  # effective update scale is scaling / rank
    dropout: float = 0.0
    trainable_fraction_target: float = 0.10

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise AdapterError(f"rank must be >= 1, got {self.rank}")
        if not 0.0 <= self.dropout < 1.0:
            raise AdapterError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 < self.trainable_fraction_target <= 1.0:
            raise AdapterError("trainable_fraction_target must be in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "base_model_id": self.base_model_id,
            "rank": self.rank,
            "scaling": self.scaling,
            "dropout": self.dropout,
            "trainable_fraction_target": self.trainable_fraction_target,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AdapterConfig":
        return cls(**data)


class LoRALinear(nn.Module):
    """A frozen linear layer plus a trainable low-rank residual B @ A.

    B starts at zero, so a freshly adapted model computes exactly what the
    base model did until the first optimizer step.
    """

    def __init__(self, base: nn.Linear, rank: int, scaling: float, dropout: float = 0.0):
        super().__init__()
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))
        self.scale = scaling / rank
        self.dropout = nn.Dropout(dropout) if dropout > 0 else nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.dropout(x) @ self.lora_a.T @ self.lora_b.T * self.scale


def apply_lora(model: nn.Module, target_names: list[str], config: AdapterConfig) -> list[str]:
    """Freeze the model and wrap the named Linear submodules with adapters.

    Returns the fully-qualified names that were wrapped; a target that does
    not resolve to an nn.Linear is an error.
    """
    for p in model.parameters():
        p.requires_grad_(False)

    wrapped: list[str] = []
    for target in target_names:
        parent = model
        *path, leaf = target.split(".")
        for part in path:
            parent = getattr(parent, part)
        layer = getattr(parent, leaf, None)
        if not isinstance(layer, nn.Linear):
            raise AdapterError(f"adapter target {target!r} is not an nn.Linear (got {type(layer).__name__})")
        setattr(parent, leaf, LoRALinear(layer, config.rank, config.scaling, config.dropout))
        wrapped.append(target)
    if not wrapped:
        raise AdapterError("no adapter targets given")
    return wrapped


def trainable_fraction(model: nn.Module) -> float:
    total = sum(p.numel() for p in model.parameters())
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    return trainable / total if total else 0.0


def trainable_parameter_report(model: nn.Module) -> dict:
    total = sum(p.numel() for p in model.parameters())
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    return {"total": total, "trainable": trainable, "fraction": trainable / total if total else 0.0}
