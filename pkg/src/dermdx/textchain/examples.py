"""Training-example builders: chain subsets and prediction-augmented inputs.

Chain subsets always contain the gold class (the training target must remain
reachable at every simulated chain depth).  Prediction augmentation includes
the gold class only with the configured probability, mirroring how often the
image model's top-N actually contains the right answer.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from dermdx.registry import ClassRegistry
from dermdx.textchain.prompts import (
    IMPLICIT_OPTIONS,
    PREDICTIONS,
    PREDICTIONS_PLUS_OPTIONS,
    PLAIN,
    PromptError,
    PromptSpec,
    build_prompt,
)

PROVENANCE_PLAIN = "plain"
PROVENANCE_CHAIN = "chain_subset"
PROVENANCE_PREDICTION = "prediction_augmented"


@dataclass(frozen=True)
class TextTrainExample:
    input_text: str
    gold_class: int
    provenance: str

    def to_dict(self) -> dict:
        return {"input_text": self.input_text, "gold_class": self.gold_class, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, data: dict) -> "TextTrainExample":
        return cls(**data)


def save_examples(examples: list[TextTrainExample], path: str | Path, seed: int | None = None) -> None:
    lines = [json.dumps({"format": "dermdx-text-examples", "format_version": 1, "seed": seed})]
    lines += [json.dumps(e.to_dict(), ensure_ascii=False) for e in examples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_examples(path: str | Path) -> list[TextTrainExample]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    if header.get("format") != "dermdx-text-examples":
        raise ValueError(f"{path} is not a text-examples file")
    return [TextTrainExample.from_dict(json.loads(line)) for line in lines[1:] if line.strip()]


def make_plain_example(narrative: str, gold_class: int, registry: ClassRegistry, mode: str = PLAIN) -> TextTrainExample:
    spec = PromptSpec(mode=mode) if mode == PLAIN else PromptSpec.full_options(mode, registry)
    return TextTrainExample(
        input_text=build_prompt(narrative, spec, registry),
        gold_class=gold_class,
        provenance=PROVENANCE_PLAIN,
    )


def make_chain_training_examples(
    narrative: str,
    gold_class: int,
    registry: ClassRegistry,
    count: int,
    size_range: tuple[int, int],
    rng_seed: int,
    predictions_n: int = 0,
    inclusion_prob: float = 1.0,
) -> list[TextTrainExample]:
    """Random gold-containing option subsets of varying length, rendered as options prompts.

    Subset sizes are uniform over [size_range[0], size_range[1]] inclusive and
    the subset order is shuffled; deterministic for a fixed seed.  With
    ``predictions_n`` set, each example also carries a simulated image-model
    recommendations section (gold included with ``inclusion_prob``), matching
    what fused chain inference feeds the model at every step.
    """
    lo, hi = size_range
    if not (2 <= lo <= hi <= len(registry)):
        raise PromptError(f"size_range {size_range} must lie within [2, {len(registry)}]")
    if gold_class not in registry:
        raise PromptError(f"gold class {gold_class} not in registry")
    if predictions_n and not 1 <= predictions_n < len(registry):
        raise PromptError(f"predictions_n must satisfy 1 <= n < {len(registry)}, got {predictions_n}")

    rng = random.Random(rng_seed)
    others = [c for c in registry.codes if c != gold_class]
    examples = []
    for _ in range(count):
        size = rng.randint(lo, hi)
        subset = [gold_class] + rng.sample(others, size - 1)
        rng.shuffle(subset)
        if predictions_n:
            if rng.random() < inclusion_prob:
                predictions = rng.sample(others, predictions_n - 1)
                predictions.insert(rng.randrange(predictions_n), gold_class)
            else:
                predictions = rng.sample(others, predictions_n)
            spec = PromptSpec(
                mode=PREDICTIONS_PLUS_OPTIONS, options=tuple(subset), predictions=tuple(predictions)
            )
        else:
            spec = PromptSpec(mode=IMPLICIT_OPTIONS, options=tuple(subset))
        examples.append(
            TextTrainExample(
                input_text=build_prompt(narrative, spec, registry),
                gold_class=gold_class,
                provenance=PROVENANCE_CHAIN,
            )
        )
    return examples


def make_prediction_augmented_example(
    narrative: str,
    gold_class: int,
    n: int,
    inclusion_prob: float,
    registry: ClassRegistry,
    rng_seed: int,
    with_options: bool = False,
) -> TextTrainExample:
    """Narrative plus n simulated image-model recommendations.

    The gold class appears among them with probability ``inclusion_prob``
    (uniform position); otherwise the list holds n distinct non-gold classes.
    """
    if not 1 <= n < len(registry):
        raise PromptError(f"n must satisfy 1 <= n < {len(registry)}, got {n}")
    if not 0.0 <= inclusion_prob <= 1.0:
        raise PromptError(f"inclusion_prob must be in [0, 1], got {inclusion_prob}")
    if gold_class not in registry:
        raise PromptError(f"gold class {gold_class} not in registry")

    rng = random.Random(rng_seed)
    others = [c for c in registry.codes if c != gold_class]
    if rng.random() < inclusion_prob:
        predictions = rng.sample(others, n - 1)
        predictions.insert(rng.randrange(n), gold_class)
    else:
        predictions = rng.sample(others, n)

    if with_options:
        spec = PromptSpec.full_options(PREDICTIONS_PLUS_OPTIONS, registry, predictions=tuple(predictions))
    else:
        spec = PromptSpec(mode=PREDICTIONS, predictions=tuple(predictions))
    return TextTrainExample(
        input_text=build_prompt(narrative, spec, registry),
        gold_class=gold_class,
        provenance=PROVENANCE_PREDICTION,
    )
