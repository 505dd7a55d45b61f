"""Adapter fine-tuning loop for the text classifier."""

from __future__ import annotations

import copy
import logging
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from dermdx.registry import ClassRegistry
from dermdx.textchain.examples import TextTrainExample
from dermdx.textchain.lora import AdapterConfig, AdapterError, trainable_parameter_report
from dermdx.textchain.models import (
    TinyTextConfig,
    TorchTextModel,
    build_adapted_model,
    save_tiny_text_checkpoint,
)

logger = logging.getLogger(__name__)

TRAINABLE_FRACTION_TOLERANCE = 0.02


@dataclass(frozen=True)
class TextTrainConfig:
    epochs_max: int = 60
    patience: int = 10
    batch_size: int = 16
    learning_rate: float = 3e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs_max < 0 or self.patience <= 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("invalid text training settings")


@dataclass
class TextTrainResult:
    checkpoint_path: Path
    history: list[dict]
    best_val_acc: float
    trainable_report: dict


def _accuracy(model: nn.Module, examples: list[TextTrainExample], batch_size: int) -> float:
    if not examples:
        return 0.0
    model.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            batch = examples[start : start + batch_size]
            logits = model([e.input_text for e in batch])
            preds = logits.argmax(dim=1).tolist()
            correct += sum(int(p == e.gold_class) for p, e in zip(preds, batch))
    return correct / len(examples)


def finetune(
    train_examples: list[TextTrainExample],
    val_examples: list[TextTrainExample],
    registry: ClassRegistry,
    adapter: AdapterConfig,
    config: TextTrainConfig,
    out_path: str | Path,
    base_config: TinyTextConfig = TinyTextConfig(),
) -> TextTrainResult:
    """Fine-tune adapters (plus the classification head) on prompt examples.

    Only adapter and head parameters receive gradients; the trainable fraction
    must stay within the adapter config's target plus a small tolerance.
    Keeps the best-val-accuracy weights.  epochs_max=0 stores the base model
    with zeroed adapters untouched.
    """
    if not train_examples:
        raise AdapterError("training corpus is empty")
    for e in train_examples + val_examples:
        if e.gold_class not in registry:
            raise AdapterError(f"gold class {e.gold_class} not in registry {registry.version!r}")
    class_counts = {c: 0 for c in registry.codes}
    for e in train_examples:
        class_counts[e.gold_class] += 1

    random.seed(config.seed)
    np.random.seed(config.seed % (2**32))
    torch.manual_seed(config.seed)

    model = build_adapted_model(len(registry), adapter, base_config)
    report = trainable_parameter_report(model)
    if report["fraction"] > adapter.trainable_fraction_target + TRAINABLE_FRACTION_TOLERANCE:
        raise AdapterError(
            f"trainable fraction {report['fraction']:.4f} exceeds target "
            f"{adapter.trainable_fraction_target} (+{TRAINABLE_FRACTION_TOLERANCE} tolerance); "
            "lower the adapter rank"
        )
    logger.info("trainable parameters: %d of %d (%.2f%%)", report["trainable"], report["total"], 100 * report["fraction"])

    optimizer = torch.optim.Adam((p for p in model.parameters() if p.requires_grad), lr=config.learning_rate)
    criterion = nn.CrossEntropyLoss()

    history: list[dict] = []
    best_state = copy.deepcopy(model.state_dict())
    best_val = _accuracy(model, val_examples, config.batch_size)
    since_best = 0
    order = list(range(len(train_examples)))
    shuffle_rng = random.Random(config.seed)

    for epoch in range(1, config.epochs_max + 1):
        model.train()
        shuffle_rng.shuffle(order)
        total_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_examples[i] for i in order[start : start + config.batch_size]]
            logits = model([e.input_text for e in batch])
            golds = torch.tensor([e.gold_class for e in batch], dtype=torch.long)
            loss = criterion(logits, golds)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total_loss += loss.item() * len(batch)
        train_acc = _accuracy(model, train_examples, config.batch_size)
        val_acc = _accuracy(model, val_examples, config.batch_size)
        history.append(
            {
                "epoch": epoch,
                "train_loss": total_loss / len(train_examples),
                "train_acc": train_acc,
                "val_acc": val_acc,
            }
        )
        if val_acc > best_val:
            best_val = val_acc
            best_state = copy.deepcopy(model.state_dict())
            since_best = 0
        else:
            since_best += 1
        logger.info("text epoch %d: loss %.4f train %.3f val %.3f", epoch, history[-1]["train_loss"], train_acc, val_acc)
        if since_best >= config.patience:
            break

    save_tiny_text_checkpoint(
        out_path,
        registry=registry,
        adapter=adapter,
        base_config=base_config,
        state_dict=best_state,
        history=history,
        best_val_acc=best_val,
    )
    return TextTrainResult(
        checkpoint_path=Path(out_path),
        history=history,
        best_val_acc=best_val,
        trainable_report=report,
    )


def evaluate_text_model(model: TorchTextModel | nn.Module, examples: list[TextTrainExample]) -> float:
    """Plain accuracy of a text model handle over prompt examples."""
    if hasattr(model, "predict_logits"):
        logits = model.predict_logits([e.input_text for e in examples])
        preds = logits.argmax(axis=1)
        return float(np.mean([int(p == e.gold_class) for p, e in zip(preds, examples)]))
    return _accuracy(model, examples, batch_size=32)
