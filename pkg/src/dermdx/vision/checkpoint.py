"""Vision checkpoint bundles and loadable model handles.

A bundle stores the backbone/augmentation configs, the registry, metric
history, and either trained weights or a fixed score vector (stub kind used
for contract fixtures).  Writes are atomic (tmp file + rename).
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from dermdx.forge import DatasetManifest, ForgeError, ImageSample
from dermdx.registry import ClassRegistry
from dermdx.vision.augment import AugmentationConfig, build_augmentation
from dermdx.vision.backbones import BackboneConfig, build_backbone
from dermdx.vision.data import ManifestImageDataset, load_image
from dermdx.vision.evaluate import DEFAULT_KS, EvaluationReport, evaluate_model

CHECKPOINT_KIND = "vision"
MODEL_TYPE_TORCH = "torch"
MODEL_TYPE_STUB_FIXED = "stub-fixed"


def atomic_torch_save(obj: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(obj, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


class VisionModelHandle:
    """Loaded vision model: image in, class-probability vector out."""

    def __init__(self, registry: ClassRegistry, aug_config: AugmentationConfig, model_id: str):
        self.registry = registry
        self.aug_config = aug_config
        self.model_id = model_id
        self.eval_transform = build_augmentation(aug_config, "eval")

    def predict_probs(self, image: Image.Image) -> np.ndarray:
        raise NotImplementedError

    def scores_for_sample(self, sample: ImageSample, roots: dict) -> np.ndarray:
        return self.predict_probs(load_image(sample, roots))


class TorchVisionModel(VisionModelHandle):
    def __init__(self, module: torch.nn.Module, registry: ClassRegistry, aug_config: AugmentationConfig, model_id: str):
        super().__init__(registry, aug_config, model_id)
        self.module = module
        self.module.eval()

    def predict_probs(self, image: Image.Image) -> np.ndarray:
        tensor = self.eval_transform(image.convert("RGB")).unsqueeze(0)
        with torch.no_grad():
            logits = self.module(tensor)
        return torch.softmax(logits, dim=1)[0].cpu().numpy()


class FixedScoreVisionStub(VisionModelHandle):
    """Returns the same probability vector for every image; fixture fuel."""

    def __init__(self, scores: list[float], registry: ClassRegistry, aug_config: AugmentationConfig):
        super().__init__(registry, aug_config, model_id="stub-fixed")
        probs = np.asarray(scores, dtype=np.float64)
        if len(probs) != len(registry):
            raise ValueError(f"stub scores length {len(probs)} != registry size {len(registry)}")
        if probs.min() < 0 or probs.sum() <= 0:
            raise ValueError("stub scores must be nonnegative with positive sum")
        self.probs = probs / probs.sum()

    def predict_probs(self, image: Image.Image) -> np.ndarray:
        return self.probs.copy()


def save_vision_checkpoint(
    path: str | Path,
    registry: ClassRegistry,
    backbone: BackboneConfig,
    augmentation: AugmentationConfig,
    state_dict: dict,
    history: list[dict],
    best_val_top1: float | None,
) -> None:
    atomic_torch_save(
        {
            "kind": CHECKPOINT_KIND,
            "model_type": MODEL_TYPE_TORCH,
            "registry": registry.to_dict(),
            "backbone": backbone.to_dict(),
            "augmentation": augmentation.to_dict(),
            "state_dict": state_dict,
            "history": history,
            "best_val_top1": best_val_top1,
        },
        path,
    )


def save_stub_vision_checkpoint(
    path: str | Path,
    registry: ClassRegistry,
    scores: list[float],
    augmentation: AugmentationConfig | None = None,
) -> None:
    aug = augmentation or AugmentationConfig(resolution=32, random_crop=False, color_jitter=False)
    atomic_torch_save(
        {
            "kind": CHECKPOINT_KIND,
            "model_type": MODEL_TYPE_STUB_FIXED,
            "registry": registry.to_dict(),
            "augmentation": aug.to_dict(),
            "scores": list(map(float, scores)),
            "history": [],
            "best_val_top1": None,
        },
        path,
    )


def load_vision_model(path: str | Path) -> VisionModelHandle:
    bundle = torch.load(path, map_location="cpu", weights_only=False)
    if bundle.get("kind") != CHECKPOINT_KIND:
        raise ForgeError(f"{path} is not a vision checkpoint (kind={bundle.get('kind')!r})")
    registry = ClassRegistry.from_dict(bundle["registry"])
    aug = AugmentationConfig.from_dict(bundle["augmentation"])
    model_type = bundle.get("model_type", MODEL_TYPE_TORCH)
    if model_type == MODEL_TYPE_STUB_FIXED:
        return FixedScoreVisionStub(bundle["scores"], registry, aug)
    backbone = BackboneConfig.from_dict(bundle["backbone"])
    module = build_backbone(backbone)
    module.load_state_dict(bundle["state_dict"])
    return TorchVisionModel(module, registry, aug, model_id=backbone.architecture_id)


def evaluate_checkpoint(
    path: str | Path,
    manifest: DatasetManifest,
    roots: dict,
    ks: tuple[int, ...] = DEFAULT_KS,
    split: str = "val",
    batch_size: int = 64,
) -> EvaluationReport:
    handle = load_vision_model(path)
    if handle.registry.to_dict() != manifest.registry.to_dict():
        raise ForgeError(
            f"checkpoint registry {handle.registry.version!r} does not match manifest "
            f"registry {manifest.registry.version!r}"
        )
    if not isinstance(handle, TorchVisionModel):
        raise ForgeError("only torch-backed checkpoints can be batch-evaluated")
    dataset = ManifestImageDataset(manifest, roots, split, handle.eval_transform)
    return evaluate_model(handle.module, dataset, ks=ks, batch_size=batch_size)
