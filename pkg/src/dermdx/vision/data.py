"""Manifest-backed image datasets and the inverse-frequency weighted sampler."""

from __future__ import annotations

from pathlib import Path
from typing import Callable

import torch
from PIL import Image
from torch.utils.data import Dataset, WeightedRandomSampler

from dermdx.forge import DatasetManifest, ForgeError, ImageSample, sampling_weights


def resolve_image_path(sample: ImageSample, roots: dict[str, Path]) -> Path:
    try:
        root = roots[sample.source_id]
    except KeyError:
        raise ForgeError(f"no image root configured for source {sample.source_id!r}")
    return Path(root) / sample.relative_path


def load_image(sample: ImageSample, roots: dict[str, Path]) -> Image.Image:
    return Image.open(resolve_image_path(sample, roots)).convert("RGB")


class ManifestImageDataset(Dataset):
    """(transformed image, class code) pairs for one split of a manifest."""

    def __init__(
        self,
        manifest: DatasetManifest,
        roots: dict[str, Path],
        split: str,
        transform: Callable,
    ):
        self.samples = manifest.subset(split)
        if not self.samples:
            raise ForgeError(f"manifest has no samples in split {split!r}")
        self.roots = {k: Path(v) for k, v in roots.items()}
        self.transform = transform

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> tuple[torch.Tensor, int]:
        sample = self.samples[index]
        image = load_image(sample, self.roots)
        return self.transform(image), sample.class_code


def make_weighted_sampler(
    manifest: DatasetManifest,
    dataset: ManifestImageDataset,
    samples_per_epoch: int | None = None,
    seed: int = 0,
) -> WeightedRandomSampler:
    """With-replacement sampler drawing each class at uniform expected frequency."""
    weights = sampling_weights(manifest)
    per_sample = torch.tensor(weights.sample_weights(dataset.samples), dtype=torch.double)
    generator = torch.Generator()
    generator.manual_seed(seed)
    return WeightedRandomSampler(
        per_sample,
        num_samples=samples_per_epoch or len(dataset),
        replacement=True,
        generator=generator,
    )
