"""Synthetic fixtures: colored-shape image sets and keyword toy corpora.

These let the whole pipeline run end to end on a laptop/CI box with no
external downloads: shapes are color-and-geometry separable for the vision
model, and toy narratives are keyword-separable for the text model.
"""

from __future__ import annotations

import random
from pathlib import Path

from PIL import Image, ImageDraw

from dermdx.corpus import Narrative, NarrativeCorpus, build_generation_prompt
from dermdx.forge import DatasetManifest, SplitConfig, assign_splits, dedup, ingest_source
from dermdx.registry import ClassRegistry

SHAPE_CLASSES = ("circle", "square", "triangle", "cross")
SHAPE_COLORS = {
    "circle": (220, 40, 40),
    "square": (40, 200, 40),
    "triangle": (40, 80, 230),
    "cross": (230, 210, 40),
}

TOY_SYMPTOMS = {
    "circle": ["ring-shaped redness", "round raised patch", "circular itching"],
    "square": ["blocky flaking", "angular dry plaques", "square crusting"],
    "triangle": ["pointed blister clusters", "wedge-shaped rash", "triangular swelling"],
    "cross": ["crossing scratch marks", "star-like bumps", "intersecting welts"],
}


def shape_registry() -> ClassRegistry:
    return ClassRegistry.from_names(list(SHAPE_CLASSES), version="shapes4-v1")


def _draw_shape(draw: ImageDraw.ImageDraw, shape: str, cx: int, cy: int, r: int, color: tuple) -> None:
    if shape == "circle":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=color)
    elif shape == "square":
        draw.rectangle([cx - r, cy - r, cx + r, cy + r], fill=color)
    elif shape == "triangle":
        draw.polygon([(cx, cy - r), (cx - r, cy + r), (cx + r, cy + r)], fill=color)
    elif shape == "cross":
        w = max(2, r // 3)
        draw.rectangle([cx - r, cy - w, cx + r, cy + w], fill=color)
        draw.rectangle([cx - w, cy - r, cx + w, cy + r], fill=color)
    else:
        raise ValueError(f"unknown shape {shape!r}")


def write_shape_images(root: str | Path, per_class: int = 50, size: int = 48, seed: int = 0) -> Path:
    """Write per_class PNGs per shape class under root/<class>/ and return root."""
    root = Path(root)
    rng = random.Random(seed)
    for shape in SHAPE_CLASSES:
        directory = root / shape
        directory.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            bg = rng.randrange(180, 240)
            img = Image.new("RGB", (size, size), (bg, bg, bg))
            draw = ImageDraw.Draw(img)
            r = rng.randrange(size // 5, size // 3)
            cx = rng.randrange(r + 1, size - r - 1)
            cy = rng.randrange(r + 1, size - r - 1)
            base = SHAPE_COLORS[shape]
            color = tuple(min(255, max(0, c + rng.randrange(-25, 26))) for c in base)
            _draw_shape(draw, shape, cx, cy, r, color)
            img.save(directory / f"{shape}_{i:03d}.png")
    return root


def build_shape_manifest(
    root: str | Path,
    per_class: int = 50,
    size: int = 48,
    seed: int = 0,
    train_fraction: float = 0.8,
) -> tuple[DatasetManifest, dict]:
    """Generate images, ingest, dedup, and split; returns (manifest, roots)."""
    registry = shape_registry()
    root = write_shape_images(root, per_class=per_class, size=size, seed=seed)
    label_map = {shape: registry.code_of(shape) for shape in SHAPE_CLASSES}
    samples, _ = ingest_source(root, "synthetic-shapes", label_map, registry)
    kept, _ = dedup(samples)
    config = SplitConfig(train_fraction=train_fraction, seed=seed)
    manifest = DatasetManifest(registry=registry, samples=assign_splits(kept, config), split_config=config)
    return manifest, {"synthetic-shapes": Path(root)}


_STORY_FORMS = (
    "For about {weeks} weeks now I have noticed {a} on my arm, and lately some {b} too. "
    "It gets worse at night and lotion has not helped.",
    "I came in because of {a}. My partner also spotted {b} near my elbow {weeks} weeks ago, "
    "and it has slowly spread.",
    "There is {a} on my leg that appeared {weeks} weeks ago. Since then I keep finding {b}, "
    "especially after showers.",
)


def toy_text_corpus(registry: ClassRegistry | None = None, per_class: int = 10, seed: int = 0) -> NarrativeCorpus:
    """Keyword-separable toy narratives: each class has a private symptom vocabulary."""
    registry = registry or shape_registry()
    rng = random.Random(seed)
    narratives = []
    for shape in SHAPE_CLASSES:
        code = registry.code_of(shape)
        symptoms = TOY_SYMPTOMS[shape]
        # draw (form, keyword pair, duration) combinations without replacement
        # so stories within a class are never byte-identical
        combos = [
            (form, a, b, weeks)
            for form in _STORY_FORMS
            for a in symptoms
            for b in symptoms
            if a != b
            for weeks in range(1, 9)
        ]
        if per_class > len(combos):
            raise ValueError(f"per_class {per_class} exceeds the {len(combos)} distinct toy stories per class")
        for i, (form, a, b, weeks) in enumerate(rng.sample(combos, per_class)):
            narratives.append(
                Narrative(
                    id=f"toy-{code}-{i:02d}",
                    class_code=code,
                    keywords=[a, b],
                    generation_prompt=build_generation_prompt([a, b]),
                    story=form.format(a=a, b=b, weeks=weeks),
                )
            )
    return NarrativeCorpus(registry=registry, narratives=narratives)
