"""Fused diagnosis: vision top-N recommendations feeding option-chain text inference.

The text model always sees the full option list (the image model's top-N is a
hint, not a restriction, since it may miss the right answer), plus the
recommendations section built from the vision output.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from dermdx.corpus import NarrativeCorpus
from dermdx.forge import DatasetManifest
from dermdx.registry import ClassRegistry
from dermdx.textchain.chain import ChainConfig, ChainState, run_chain, score_options
from dermdx.textchain.models import TextModelHandle
from dermdx.textchain.prompts import PREDICTIONS_PLUS_OPTIONS, PromptSpec, build_prompt
from dermdx.vision.checkpoint import VisionModelHandle
from dermdx.vision.evaluate import PredictionSet, topn_from_scores

MODE_CHAIN = "chain"
MODE_DIRECT = "direct"


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    top_n: int = 5
    chain_k: int | None = 5  # None = direct single-shot classification
    pairing_seed: int = 0

    def __post_init__(self) -> None:
        if self.top_n < 1:
            raise FusionError(f"top_n must be >= 1, got {self.top_n}")
        if self.chain_k is not None and self.chain_k < 1:
            raise FusionError(f"chain_k must be >= 1 when set, got {self.chain_k}")

    @property
    def mode(self) -> str:
        return MODE_CHAIN if self.chain_k is not None else MODE_DIRECT

    def to_dict(self) -> dict:
        return {"top_n": self.top_n, "chain_k": self.chain_k, "pairing_seed": self.pairing_seed}


@dataclass
class DiagnosisResult:
    final_class: int
    image_topn: PredictionSet
    chain_trace: ChainState
    timings_ms: dict[str, float]
    mode: str
    top_n: int
    registry_version: str

    def to_dict(self, registry: ClassRegistry) -> dict:
        return {
            "final_class": {"code": self.final_class, "name": registry.name_of(self.final_class)},
            "mode": self.mode,
            "top_n": self.top_n,
            "registry_version": self.registry_version,
            "image_topn": self.image_topn.to_dict(registry),
            "chain_trace": self.chain_trace.to_dict(),
            "timings_ms": self.timings_ms,
        }


def check_registries(vision_model: VisionModelHandle, text_model: TextModelHandle) -> ClassRegistry:
    if vision_model.registry.to_dict() != text_model.registry.to_dict():
        raise FusionError(
            f"vision registry {vision_model.registry.version!r} does not match "
            f"text registry {text_model.registry.version!r}"
        )
    return vision_model.registry


def fuse_scores(
    vision_probs: np.ndarray,
    narrative: str,
    text_model: TextModelHandle,
    config: FusionConfig,
    sample_id: str = "",
    clock=time.perf_counter,
    vision_ms: float = 0.0,
) -> DiagnosisResult:
    """Run the text stage on precomputed vision probabilities."""
    registry = text_model.registry
    if not narrative.strip():
        raise FusionError("narrative must be nonempty")
    if config.top_n > len(registry):
        raise FusionError(f"top_n {config.top_n} exceeds registry size {len(registry)}")

    topn = topn_from_scores(vision_probs, config.top_n, sample_id=sample_id)
    predictions = tuple(code for code, _ in topn.top)

    def prompt_builder(narr: str, remaining: tuple[int, ...]) -> str:
        spec = PromptSpec(mode=PREDICTIONS_PLUS_OPTIONS, options=remaining, predictions=predictions)
        return build_prompt(narr, spec, registry)

    text_start = clock()
    all_options = tuple(registry.codes)
    if config.mode == MODE_CHAIN:
        chain_config = ChainConfig(k=config.chain_k, initial_options=all_options)
        final, trace = run_chain(text_model, narrative, chain_config, registry, prompt_builder=prompt_builder)
    else:
        scores = score_options(text_model, prompt_builder(narrative, all_options), all_options)
        final = max(scores.items(), key=lambda kv: (kv[1], -kv[0]))[0]
        trace = ChainState(remaining=all_options, final_scores=scores)
    text_ms = (clock() - text_start) * 1000.0

    return DiagnosisResult(
        final_class=final,
        image_topn=topn,
        chain_trace=trace,
        timings_ms={
            "vision": round(vision_ms, 3),
            "text": round(text_ms, 3),
            "total": round(vision_ms + text_ms, 3),
        },
        mode=config.mode,
        top_n=config.top_n,
        registry_version=registry.version,
    )


def diagnose(
    image: Image.Image,
    narrative: str,
    vision_model: VisionModelHandle,
    text_model: TextModelHandle,
    config: FusionConfig,
    sample_id: str = "",
    clock=time.perf_counter,
) -> DiagnosisResult:
    """Full image+narrative path: vision top-N first, then chain or direct text."""
    check_registries(vision_model, text_model)
    vision_start = clock()
    probs = vision_model.predict_probs(image)
    vision_ms = (clock() - vision_start) * 1000.0
    return fuse_scores(
        probs, narrative, text_model, config, sample_id=sample_id, clock=clock, vision_ms=vision_ms
    )


@dataclass
class FusionEvaluation:
    count_confusion: np.ndarray
    accuracy: float
    total: int
    trials: int
    per_class_recall: dict[int, float] = field(default_factory=dict)

    def accuracy_confusion(self) -> np.ndarray:
        rows = self.count_confusion.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, self.count_confusion / rows, 0.0)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "trials": self.trials,
            "accuracy": self.accuracy,
            "per_class_recall": {str(c): v for c, v in sorted(self.per_class_recall.items())},
            "count_confusion": self.count_confusion.tolist(),
            "accuracy_confusion": self.accuracy_confusion().tolist(),
        }


def evaluate_fusion(
    manifest: DatasetManifest,
    corpus: NarrativeCorpus,
    roots: dict,
    vision_model: VisionModelHandle,
    text_model: TextModelHandle,
    config: FusionConfig,
    trials: int = 1,
) -> FusionEvaluation:
    """Pair every val image with a seeded uniform same-class val narrative and diagnose.

    ``trials`` repeats the pairing with fresh draws; the report accumulates
    val-image-count x trials outcomes.
    """
    registry = check_registries(vision_model, text_model)
    if registry.to_dict() != manifest.registry.to_dict():
        raise FusionError("manifest registry does not match the models")
    if registry.to_dict() != corpus.registry.to_dict():
        raise FusionError("corpus registry does not match the models")

    val_images = sorted(manifest.subset("val"), key=lambda s: s.id)
    if not val_images:
        raise FusionError("manifest has no val images")
    val_narratives: dict[int, list] = {}
    for narrative in sorted(corpus.subset("val"), key=lambda n: n.id):
        val_narratives.setdefault(narrative.class_code, []).append(narrative)

    image_classes = {s.class_code for s in val_images}
    missing = sorted(c for c in image_classes if not val_narratives.get(c))
    if missing:
        names = [registry.name_of(c) for c in missing]
        raise FusionError(f"classes with val images but no val narratives: {missing} ({names})")

    n = len(registry)
    confusion = np.zeros((n, n), dtype=np.int64)
    for trial in range(trials):
        rng = random.Random(config.pairing_seed * 1_000_003 + trial)
        for sample in val_images:
            narrative = rng.choice(val_narratives[sample.class_code])
            probs = vision_model.scores_for_sample(sample, roots)
            result = fuse_scores(probs, narrative.story, text_model, config, sample_id=sample.id)
            confusion[sample.class_code, result.final_class] += 1

    total = len(val_images) * trials
    recall = {
        c: float(confusion[c, c]) / int(confusion[c].sum())
        for c in range(n)
        if confusion[c].sum() > 0
    }
    return FusionEvaluation(
        count_confusion=confusion,
        accuracy=float(np.trace(confusion)) / total,
        total=total,
        trials=trials,
        per_class_recall=recall,
    )


def load_fusion_models(vision_checkpoint: str | Path, text_checkpoint: str | Path):
    from dermdx.textchain.models import load_text_model
    from dermdx.vision.checkpoint import load_vision_model

    vision_model = load_vision_model(vision_checkpoint)
    text_model = load_text_model(text_checkpoint)
    check_registries(vision_model, text_model)
    return vision_model, text_model
