"""Top-k accuracy, confusion matrices, and top-N prediction sets.

Ordering rule used everywhere: classes sorted by descending score, ties broken
by ascending class code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch.utils.data import DataLoader

from dermdx.forge import DatasetManifest, ForgeError
from dermdx.registry import ClassRegistry

DEFAULT_KS = (1, 3, 5)


@dataclass(frozen=True)
class PredictionSet:
    """Top-N class predictions with the full normalized score map."""

    sample_id: str
    scores: dict[int, float]
    top: tuple[tuple[int, float], ...]

    def to_dict(self, registry: ClassRegistry | None = None) -> dict:
        top = [
            {"code": code, "score": score, **({"name": registry.name_of(code)} if registry else {})}
            for code, score in self.top
        ]
        return {"sample_id": self.sample_id, "top": top}


def rank_classes(scores: np.ndarray) -> np.ndarray:
    """Class codes sorted by descending score, ties by ascending code."""
    codes = np.arange(len(scores))
    # lexsort: last key is primary
    return np.lexsort((codes, -np.asarray(scores, dtype=np.float64)))


def topn_from_scores(scores: np.ndarray, n: int, sample_id: str = "") -> PredictionSet:
    scores = np.asarray(scores, dtype=np.float64)
    if n > len(scores):
        raise ValueError(f"n={n} exceeds the number of classes ({len(scores)})")
    order = rank_classes(scores)
    top = tuple((int(c), float(scores[c])) for c in order[:n])
    return PredictionSet(
        sample_id=sample_id,
        scores={int(c): float(s) for c, s in enumerate(scores)},
        top=top,
    )


@dataclass
class EvaluationReport:
    top_k_accuracy: dict[int, float]
    confusion: np.ndarray  # rows gold, columns predicted
    per_class_recall: dict[int, float]
    total: int

    def __post_init__(self) -> None:
        n = self.confusion.shape[0]
        if self.confusion.shape != (n, n):
            raise ValueError("confusion matrix must be square")
        if int(self.confusion.sum()) != self.total:
            raise ValueError("confusion matrix total does not match sample count")

    @property
    def top1(self) -> float:
        return float(np.trace(self.confusion)) / self.total if self.total else 0.0

    def row_normalized(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(rows > 0, self.confusion / rows, 0.0)
        return out

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "top_k_accuracy": {str(k): v for k, v in sorted(self.top_k_accuracy.items())},
            "per_class_recall": {str(c): v for c, v in sorted(self.per_class_recall.items())},
            "confusion": self.confusion.tolist(),
        }


def evaluate_scores(
    score_matrix: np.ndarray,
    golds: np.ndarray,
    ks: tuple[int, ...] = DEFAULT_KS,
) -> EvaluationReport:
    """Score a (samples x classes) matrix against gold labels.

    k larger than the class count saturates at the class count.
    """
    scores = np.asarray(score_matrix, dtype=np.float64)
    golds = np.asarray(golds, dtype=np.int64)
    n_samples, n_classes = scores.shape
    if len(golds) != n_samples:
        raise ValueError("gold labels and score rows disagree in length")

    rankings = np.stack([rank_classes(row) for row in scores])
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for gold, ranking in zip(golds, rankings):
        confusion[gold, ranking[0]] += 1

    top_k: dict[int, float] = {}
    for k in ks:
        kk = min(k, n_classes)
        hits = sum(int(gold in ranking[:kk]) for gold, ranking in zip(golds, rankings))
        top_k[k] = hits / n_samples if n_samples else 0.0

    recall: dict[int, float] = {}
    for c in range(n_classes):
        row_total = int(confusion[c].sum())
        if row_total:
            recall[c] = float(confusion[c, c]) / row_total

    return EvaluationReport(top_k_accuracy=top_k, confusion=confusion, per_class_recall=recall, total=n_samples)


def collect_scores(model: torch.nn.Module, loader: DataLoader) -> tuple[np.ndarray, np.ndarray]:
    """Softmax class probabilities and gold labels over a loader, in order."""
    model.eval()
    all_scores = []
    all_golds = []
    with torch.no_grad():
        for images, labels in loader:
            logits = model(images)
            all_scores.append(torch.softmax(logits, dim=1).cpu().numpy())
            all_golds.append(labels.numpy())
    return np.concatenate(all_scores), np.concatenate(all_golds)


def evaluate_model(
    model: torch.nn.Module,
    dataset,
    ks: tuple[int, ...] = DEFAULT_KS,
    batch_size: int = 64,
) -> EvaluationReport:
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False)
    scores, golds = collect_scores(model, loader)
    return evaluate_scores(scores, golds, ks=ks)


def check_registry_match(checkpoint_registry: ClassRegistry, manifest: DatasetManifest) -> None:
    if checkpoint_registry.to_dict() != manifest.registry.to_dict():
        raise ForgeError(
            f"checkpoint registry {checkpoint_registry.version!r} does not match "
            f"manifest registry {manifest.registry.version!r}"
        )


def predict_topn(model: torch.nn.Module, image_tensor: torch.Tensor, n: int, sample_id: str = "") -> PredictionSet:
    """Top-N normalized class probabilities for one transformed image."""
    model.eval()
    with torch.no_grad():
        logits = model(image_tensor.unsqueeze(0))
        probs = torch.softmax(logits, dim=1)[0].cpu().numpy()
    return topn_from_scores(probs, n, sample_id=sample_id)
