"""Image augmentation stacks for training and deterministic eval transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from torchvision import transforms


class AugmentationError(ValueError):
    pass


# "slightly larger" pre-crop resize; 224 -> 256 under the conventional ratio
OVERSIZE_RATIO = 1.14


def default_oversize(resolution: int) -> int:
    return math.ceil(resolution * OVERSIZE_RATIO)


@dataclass(frozen=True)
class AugmentationConfig:
    resolution: int = 224
    oversize_resize: int | None = None  # None -> ceil(resolution * 1.14)
    color_jitter: bool = True
    color_jitter_strength: float = 0.4
    gaussian_blur: bool = False
    gaussian_blur_kernel: int = 5
    horizontal_flip: float = 0.5
    vertical_flip: float = 0.5
    random_rotation: float = 30.0
    random_crop: bool = True

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise AugmentationError(f"resolution must be positive, got {self.resolution}")
        oversize = self.effective_oversize
        if self.random_crop and oversize <= self.resolution:
            raise AugmentationError(
                f"oversize_resize ({oversize}) must exceed resolution ({self.resolution}) when random_crop is on"
            )
        for name in ("horizontal_flip", "vertical_flip"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise AugmentationError(f"{name} probability must be in [0, 1], got {p}")
        if self.color_jitter and self.color_jitter_strength < 0:
            raise AugmentationError("color_jitter_strength must be nonnegative")
        if self.gaussian_blur and (self.gaussian_blur_kernel <= 0 or self.gaussian_blur_kernel % 2 == 0):
            raise AugmentationError(f"gaussian_blur_kernel must be a positive odd integer, got {self.gaussian_blur_kernel}")
        if self.random_rotation < 0:
            raise AugmentationError("random_rotation must be nonnegative degrees")

    @property
    def effective_oversize(self) -> int:
        return self.oversize_resize if self.oversize_resize is not None else default_oversize(self.resolution)

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "oversize_resize": self.oversize_resize,
            "color_jitter": self.color_jitter,
            "color_jitter_strength": self.color_jitter_strength,
            "gaussian_blur": self.gaussian_blur,
            "gaussian_blur_kernel": self.gaussian_blur_kernel,
            "horizontal_flip": self.horizontal_flip,
            "vertical_flip": self.vertical_flip,
            "random_rotation": self.random_rotation,
            "random_crop": self.random_crop,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentationConfig":
        return cls(**data)


def build_augmentation(config: AugmentationConfig, mode: str) -> transforms.Compose:
    """Train: oversize resize -> crop -> rotation -> flips -> jitter -> blur.

    Eval applies only the deterministic square resize.  Both modes emit
    float tensors of shape (3, resolution, resolution).
    """
    if mode not in ("train", "eval"):
        raise AugmentationError(f"mode must be 'train' or 'eval', got {mode!r}")

    steps: list = []
    if mode == "eval":
        steps.append(transforms.Resize((config.resolution, config.resolution)))
    else:
        if config.random_crop:
            # aspect-preserving short-side resize keeps proportions before the crop
            steps.append(transforms.Resize(config.effective_oversize))
            steps.append(transforms.RandomCrop(config.resolution))
        else:
            steps.append(transforms.Resize((config.resolution, config.resolution)))
        if config.random_rotation > 0:
            steps.append(transforms.RandomRotation(config.random_rotation))
        if config.horizontal_flip > 0:
            steps.append(transforms.RandomHorizontalFlip(config.horizontal_flip))
        if config.vertical_flip > 0:
            steps.append(transforms.RandomVerticalFlip(config.vertical_flip))
        if config.color_jitter:
            s = config.color_jitter_strength
            steps.append(transforms.ColorJitter(brightness=s, contrast=s, saturation=s))
        if config.gaussian_blur:
            steps.append(transforms.GaussianBlur(config.gaussian_blur_kernel))
    steps.append(transforms.ToTensor())
    return transforms.Compose(steps)
