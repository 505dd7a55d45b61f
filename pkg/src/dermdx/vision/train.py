"""Training loop: weighted or plain sampling, early stopping, best-val checkpointing."""

from __future__ import annotations

import copy
import logging
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader

from dermdx.forge import DatasetManifest
from dermdx.vision.augment import AugmentationConfig, build_augmentation
from dermdx.vision.backbones import BackboneConfig, FreezeReport, build_backbone, freeze_parameters
from dermdx.vision.checkpoint import load_vision_model, save_vision_checkpoint
from dermdx.vision.data import ManifestImageDataset, make_weighted_sampler

logger = logging.getLogger(__name__)

__all__ = ["TrainConfig", "TrainResult", "train", "load_vision_model"]


@dataclass(frozen=True)
class TrainConfig:
    epochs_max: int = 100
    patience: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    sampler: str = "plain"  # "plain" | "weighted"
    samples_per_epoch: int | None = None
    num_workers: int = 0

    def __post_init__(self) -> None:
        if self.epochs_max <= 0 or self.patience <= 0 or self.batch_size <= 0:
            raise ValueError("epochs_max, patience and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.sampler not in ("plain", "weighted"):
            raise ValueError(f"sampler must be 'plain' or 'weighted', got {self.sampler!r}")
        if self.samples_per_epoch is not None and self.samples_per_epoch <= 0:
            raise ValueError("samples_per_epoch must be positive when set")

    def to_dict(self) -> dict:
        return {
            "epochs_max": self.epochs_max,
            "patience": self.patience,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "sampler": self.sampler,
            "samples_per_epoch": self.samples_per_epoch,
            "num_workers": self.num_workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass
class TrainResult:
    checkpoint_path: Path
    history: list[dict]
    best_val_top1: float
    best_epoch: int
    freeze_report: FreezeReport


def _seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def _run_epoch(model, loader, criterion, optimizer=None) -> tuple[float, float]:
    training = optimizer is not None
    model.train(training)
    total_loss = 0.0
    correct = 0
    seen = 0
    with torch.set_grad_enabled(training):
        for images, labels in loader:
            logits = model(images)
            loss = criterion(logits, labels)
            if training:
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            total_loss += loss.item() * len(labels)
            correct += int((logits.argmax(dim=1) == labels).sum())
            seen += len(labels)
    return total_loss / seen, correct / seen


def train(
    manifest: DatasetManifest,
    roots: dict,
    backbone: BackboneConfig,
    augmentation: AugmentationConfig,
    config: TrainConfig,
    out_path: str | Path,
) -> TrainResult:
    """Train a backbone on a manifest's train split, early-stopping on val top-1.

    The checkpoint written to ``out_path`` holds the best-val weights plus the
    backbone/augmentation configs, the registry, and the epoch history.
    """
    _seed_everything(config.seed)

    model = build_backbone(backbone)
    freeze_report = freeze_parameters(model, backbone.freeze_fraction)

    train_tf = build_augmentation(augmentation, "train")
    eval_tf = build_augmentation(augmentation, "eval")
    train_ds = ManifestImageDataset(manifest, roots, "train", train_tf)
    val_ds = ManifestImageDataset(manifest, roots, "val", eval_tf)

    if config.sampler == "weighted":
        sampler = make_weighted_sampler(manifest, train_ds, config.samples_per_epoch, seed=config.seed)
        train_loader = DataLoader(
            train_ds, batch_size=config.batch_size, sampler=sampler, num_workers=config.num_workers
        )
    else:
        train_loader = DataLoader(
            train_ds, batch_size=config.batch_size, shuffle=True, num_workers=config.num_workers
        )
    val_loader = DataLoader(val_ds, batch_size=config.batch_size, shuffle=False, num_workers=config.num_workers)

    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=config.learning_rate)
    criterion = nn.CrossEntropyLoss()

    history: list[dict] = []
    best_state = copy.deepcopy(model.state_dict())
    best_val = -1.0
    best_epoch = 0
    since_best = 0

    for epoch in range(1, config.epochs_max + 1):
        train_loss, train_acc = _run_epoch(model, train_loader, criterion, optimizer)
        val_loss, val_acc = _run_epoch(model, val_loader, criterion)
        history.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "train_acc": train_acc,
                "val_loss": val_loss,
                "val_acc": val_acc,
            }
        )
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
            since_best = 0
        else:
            since_best += 1
        logger.info(
            "epoch %d: train loss %.4f acc %.3f | val loss %.4f acc %.3f%s",
            epoch, train_loss, train_acc, val_loss, val_acc, " *" if since_best == 0 else "",
        )
        if since_best >= config.patience:
            logger.info("early stop at epoch %d (no val improvement for %d epochs)", epoch, config.patience)
            break

    save_vision_checkpoint(
        out_path,
        registry=manifest.registry,
        backbone=backbone,
        augmentation=augmentation,
        state_dict=best_state,
        history=history,
        best_val_top1=best_val,
    )
    return TrainResult(
        checkpoint_path=Path(out_path),
        history=history,
        best_val_top1=best_val,
        best_epoch=best_epoch,
        freeze_report=freeze_report,
    )
