"""Image dataset forging: ingest sources, dedup by content hash, split, weigh.

A manifest is the unit of exchange: a registry, a split config, and a list of
provenance-tracked image samples.  All operations here are pure functions over
manifests except ingestion, which reads the filesystem.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from dermdx.registry import ClassRegistry

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "dermdx-manifest"
MANIFEST_FORMAT_VERSION = 1

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp", ".gif", ".webp", ".tif", ".tiff"}

TRAIN = "train"
VAL = "val"


class ForgeError(Exception):
    """Raised for unrecoverable dataset-forging problems."""


@dataclass(frozen=True)
class ImageSample:
    id: str
    source_id: str
    relative_path: str
    class_code: int
    content_hash: str
    width: int
    height: int
    split: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source_id": self.source_id,
            "relative_path": self.relative_path,
            "class_code": self.class_code,
            "content_hash": self.content_hash,
            "width": self.width,
            "height": self.height,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ImageSample":
        return cls(**data)


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")

    def to_dict(self) -> dict:
        return {"train_fraction": self.train_fraction, "seed": self.seed, "stratified": self.stratified}

    @classmethod
    def from_dict(cls, data: dict) -> "SplitConfig":
        return cls(**data)


@dataclass(frozen=True)
class Rejection:
    """One file ingest could not turn into a sample, and why."""

    source_id: str
    relative_path: str
    reason: str


@dataclass
class DatasetManifest:
    registry: ClassRegistry
    samples: list[ImageSample]
    split_config: SplitConfig | None = None

    def __post_init__(self) -> None:
        for sample in self.samples:
            if sample.class_code not in self.registry:
                raise ForgeError(
                    f"sample {sample.id} has class code {sample.class_code} not in registry {self.registry.version!r}"
                )

    @property
    def stats(self) -> dict[int, dict[str, int]]:
        """Per-class counts by split, recomputed from the sample list."""
        table: dict[int, dict[str, int]] = {}
        for sample in self.samples:
            row = table.setdefault(sample.class_code, {TRAIN: 0, VAL: 0, "unsplit": 0, "total": 0})
            row[sample.split if sample.split in (TRAIN, VAL) else "unsplit"] += 1
            row["total"] += 1
        return table

    def subset(self, split: str) -> list[ImageSample]:
        return [s for s in self.samples if s.split == split]

    def to_json(self) -> str:
        doc = {
            "format": MANIFEST_FORMAT,
            "format_version": MANIFEST_FORMAT_VERSION,
            "registry": self.registry.to_dict(),
            "split_config": self.split_config.to_dict() if self.split_config else None,
            "samples": [s.to_dict() for s in self.samples],
        }
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        if doc.get("format") != MANIFEST_FORMAT:
            raise ForgeError(f"not a {MANIFEST_FORMAT} document (format={doc.get('format')!r})")
        if doc.get("format_version") != MANIFEST_FORMAT_VERSION:
            raise ForgeError(f"unsupported manifest format_version {doc.get('format_version')!r}")
        return cls(
            registry=ClassRegistry.from_dict(doc["registry"]),
            samples=[ImageSample.from_dict(s) for s in doc["samples"]],
            split_config=SplitConfig.from_dict(doc["split_config"]) if doc["split_config"] else None,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class SamplingWeights:
    """Inverse-frequency class weights over the train split."""

    per_class_weight: dict[int, float]
    normalization: str = "inverse-frequency"

    def sample_weights(self, samples: list[ImageSample]) -> list[float]:
        return [self.per_class_weight[s.class_code] for s in samples]


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def ingest_source(
    source_root: str | Path,
    source_id: str,
    label_map: dict[str, int],
    registry: ClassRegistry,
    ignore_dirs: set[str] | None = None,
    exclude_files: set[str] | None = None,
) -> tuple[list[ImageSample], list[Rejection]]:
    """Walk one source tree (one subdirectory per class) into samples.

    Every class subdirectory must appear in ``label_map`` or ``ignore_dirs``.
    ``exclude_files`` holds source-relative paths that were manually reviewed
    and rejected as irrelevant.  Unreadable or non-image files are returned as
    rejections, never silently dropped.
    """
    root = Path(source_root)
    if not root.is_dir():
        raise ForgeError(f"source root {root} does not exist or is not a directory")
    ignore_dirs = ignore_dirs or set()
    exclude_files = exclude_files or set()

    for code in label_map.values():
        if code not in registry:
            raise ForgeError(f"label_map points at class code {code} not in registry {registry.version!r}")

    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    unmapped = [d.name for d in subdirs if d.name not in label_map and d.name not in ignore_dirs]
    if unmapped:
        raise ForgeError(
            f"source {source_id!r} has unmapped directories (add to label map or ignore list): {unmapped}"
        )

    samples: list[ImageSample] = []
    rejections: list[Rejection] = []
    for subdir in subdirs:
        if subdir.name in ignore_dirs:
            continue
        class_code = label_map[subdir.name]
        for path in sorted(subdir.rglob("*")):
            if not path.is_file():
                continue
            rel = path.relative_to(root).as_posix()
            if rel in exclude_files:
                rejections.append(Rejection(source_id, rel, "excluded by manual review list"))
                continue
            if path.suffix.lower() not in IMAGE_EXTENSIONS:
                rejections.append(Rejection(source_id, rel, f"unsupported extension {path.suffix!r}"))
                continue
            try:
                with Image.open(path) as img:
                    img.verify()
                with Image.open(path) as img:
                    width, height = img.size
            except Exception as exc:
                rejections.append(Rejection(source_id, rel, f"unreadable image: {exc}"))
                continue
            digest = hash_file(path)
            samples.append(
                ImageSample(
                    id=f"{source_id}/{rel}",
                    source_id=source_id,
                    relative_path=rel,
                    class_code=class_code,
                    content_hash=digest,
                    width=width,
                    height=height,
                )
            )

    if not samples:
        raise ForgeError(f"source {source_id!r} at {root} yielded zero images")
    for rejection in rejections:
        logger.warning("rejected %s/%s: %s", rejection.source_id, rejection.relative_path, rejection.reason)
    return samples, rejections


def dedup(samples: list[ImageSample]) -> tuple[list[ImageSample], list[ImageSample]]:
    """Drop content-hash duplicates, keeping the first under (source_id, path) order."""
    ordered = sorted(samples, key=lambda s: (s.source_id, s.relative_path))
    seen: set[str] = set()
    kept: list[ImageSample] = []
    removed: list[ImageSample] = []
    for sample in ordered:
        if sample.content_hash in seen:
            removed.append(sample)
        else:
            seen.add(sample.content_hash)
            kept.append(sample)
    return kept, removed


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def assign_splits(samples: list[ImageSample], config: SplitConfig) -> list[ImageSample]:
    """Assign every sample to train or val, stratified per class when configured.

    Per class, the train count is round-half-up of train_fraction x class size.
    A class with fewer than 2 samples goes entirely to train with a warning.
    Deterministic for a fixed seed regardless of input order.
    """
    by_class: dict[int, list[ImageSample]] = {}
    for sample in samples:
        by_class.setdefault(sample.class_code, []).append(sample)

    rng = random.Random(config.seed)
    out: list[ImageSample] = []
    if config.stratified:
        for code in sorted(by_class):
            group = sorted(by_class[code], key=lambda s: (s.source_id, s.relative_path))
            rng.shuffle(group)
            if len(group) < 2:
                logger.warning("class %d has %d sample(s); placing all in train", code, len(group))
                train_count = len(group)
            else:
                train_count = _round_half_up(config.train_fraction * len(group))
            for i, sample in enumerate(group):
                out.append(replace(sample, split=TRAIN if i < train_count else VAL))
    else:
        ordered = sorted(samples, key=lambda s: (s.source_id, s.relative_path))
        rng.shuffle(ordered)
        train_count = _round_half_up(config.train_fraction * len(ordered))
        out = [replace(s, split=TRAIN if i < train_count else VAL) for i, s in enumerate(ordered)]

    out.sort(key=lambda s: (s.source_id, s.relative_path))
    return out


def compute_stats(manifest: DatasetManifest) -> dict:
    """Machine-readable per-class count table (rows sum to the sample total)."""
    stats = manifest.stats
    rows = []
    for code in sorted(stats):
        row = stats[code]
        rows.append(
            {
                "class_code": code,
                "class_name": manifest.registry.name_of(code),
                "train": row[TRAIN],
                "val": row[VAL],
                "unsplit": row["unsplit"],
                "total": row["total"],
            }
        )
    return {
        "registry_version": manifest.registry.version,
        "classes": rows,
        "total": sum(r["total"] for r in rows),
    }


def format_stats(stats: dict) -> str:
    lines = [f"{'code':>4}  {'train':>7}  {'val':>7}  {'total':>7}  class"]
    for row in stats["classes"]:
        lines.append(
            f"{row['class_code']:>4}  {row['train']:>7}  {row['val']:>7}  {row['total']:>7}  {row['class_name']}"
        )
    lines.append(f"total: {stats['total']} samples across {len(stats['classes'])} classes")
    return "\n".join(lines)


def sampling_weights(manifest: DatasetManifest) -> SamplingWeights:
    """weight(c) = 1 / train_count(c); uniform expected class frequency under replacement."""
    train_counts: dict[int, int] = {}
    present: set[int] = set()
    for sample in manifest.samples:
        present.add(sample.class_code)
        if sample.split == TRAIN:
            train_counts[sample.class_code] = train_counts.get(sample.class_code, 0) + 1

    missing = sorted(c for c in present if train_counts.get(c, 0) == 0)
    if missing:
        names = [manifest.registry.name_of(c) for c in missing]
        raise ForgeError(f"classes with zero train samples: {missing} ({names})")
    return SamplingWeights(per_class_weight={c: 1.0 / n for c, n in sorted(train_counts.items())})


def simulate_weighted_draws(weights: SamplingWeights, manifest: DatasetManifest, draws: int, seed: int = 0) -> dict[int, int]:
    """Monte-Carlo class histogram of weighted with-replacement draws over the train split."""
    train = manifest.subset(TRAIN)
    if not train:
        raise ForgeError("manifest has no train split")
    codes = np.array([s.class_code for s in train])
    w = np.array(weights.sample_weights(train), dtype=np.float64)
    p = w / w.sum()
    rng = np.random.default_rng(seed)
    drawn = rng.choice(len(train), size=draws, replace=True, p=p)
    counts = np.bincount(codes[drawn], minlength=len(manifest.registry))
    return {code: int(counts[code]) for code in sorted(set(codes.tolist()))}
