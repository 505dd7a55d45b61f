"""Option-elimination inference: repeatedly drop the k least-likely classes.

Each pass rebuilds the prompt with the surviving options, scores them, and
removes the k lowest until k or fewer remain; the top survivor is the answer.
Reframing "pick 1 of m" as repeated "drop the k worst" is the whole trick.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from dermdx.registry import ClassRegistry
from dermdx.textchain.models import TextModelHandle
from dermdx.textchain.prompts import IMPLICIT_OPTIONS, PromptSpec, build_prompt


class ChainError(ValueError):
    pass


@dataclass(frozen=True)
class ChainConfig:
    k: int = 5
    initial_options: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        options = tuple(self.initial_options)
        if len(set(options)) != len(options):
            raise ChainError("initial_options must be unique")
        if options and not 1 <= self.k < len(options):
            raise ChainError(f"need 1 <= k < |initial_options|; got k={self.k}, m={len(options)}")
        if not options and self.k < 1:
            raise ChainError("k must be >= 1")

    def resolved_options(self, registry: ClassRegistry) -> tuple[int, ...]:
        options = tuple(self.initial_options) or tuple(registry.codes)
        for code in options:
            if code not in registry:
                raise ChainError(f"option {code} not in registry {registry.version!r}")
        if not 1 <= self.k < len(options):
            raise ChainError(f"need 1 <= k < |options|; got k={self.k}, m={len(options)}")
        return options

    def to_dict(self) -> dict:
        return {"k": self.k, "initial_options": list(self.initial_options)}

    @classmethod
    def from_dict(cls, data: dict) -> "ChainConfig":
        return cls(k=data["k"], initial_options=tuple(data["initial_options"]))


@dataclass(frozen=True)
class ChainStep:
    step: int
    remaining_before: tuple[int, ...]
    scores: dict[int, float]
    removed: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "remaining_before": list(self.remaining_before),
            "scores": [{"code": c, "score": s} for c, s in sorted(self.scores.items())],
            "removed": list(self.removed),
        }


@dataclass
class ChainState:
    remaining: tuple[int, ...]
    step: int = 0
    eliminated: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)
    steps: list[ChainStep] = field(default_factory=list)
    final_scores: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "remaining": list(self.remaining),
            "step": self.step,
            "eliminated": [{"step": s, "removed": list(codes)} for s, codes in self.eliminated],
            "steps": [s.to_dict() for s in self.steps],
            "final_scores": [{"code": c, "score": s} for c, s in sorted(self.final_scores.items())],
        }


def score_options(model: TextModelHandle, prompt: str, remaining: tuple[int, ...]) -> dict[int, float]:
    """Class scores restricted to the remaining options, normalized to sum 1.

    Softmax over the remaining logits only, which equals the full softmax
    renormalized over that subset.
    """
    if not remaining:
        raise ChainError("remaining options must be nonempty")
    logits = model.predict_logits([prompt])[0]
    sub = np.asarray([logits[c] for c in remaining], dtype=np.float64)
    sub = np.exp(sub - sub.max())
    sub /= sub.sum()
    return {int(c): float(p) for c, p in zip(remaining, sub)}


def _lowest_k(scores: dict[int, float], k: int) -> tuple[int, ...]:
    # ties eliminate the higher class code first
    ranked = sorted(scores.items(), key=lambda kv: (kv[1], -kv[0]))
    return tuple(code for code, _ in ranked[:k])


def _argmax(scores: dict[int, float]) -> int:
    return max(scores.items(), key=lambda kv: (kv[1], -kv[0]))[0]


def default_prompt_builder(registry: ClassRegistry) -> Callable[[str, tuple[int, ...]], str]:
    def build(narrative: str, remaining: tuple[int, ...]) -> str:
        return build_prompt(narrative, PromptSpec(mode=IMPLICIT_OPTIONS, options=remaining), registry)

    return build


def run_chain(
    model: TextModelHandle,
    narrative: str,
    config: ChainConfig,
    registry: ClassRegistry,
    prompt_builder: Callable[[str, tuple[int, ...]], str] | None = None,
) -> tuple[int, ChainState]:
    """Eliminate k lowest-scoring options per pass; survivor argmax is final.

    Remaining sizes follow m, m-k, m-2k, ... stopping at the first value in
    [1, k].  Every pass re-queries the model with a prompt rebuilt from the
    surviving options.
    """
    options = config.resolved_options(registry)
    build = prompt_builder or default_prompt_builder(registry)

    state = ChainState(remaining=options)
    remaining = list(options)
    while len(remaining) > config.k:
        state.step += 1
        prompt = build(narrative, tuple(remaining))
        scores = score_options(model, prompt, tuple(remaining))
        removed = _lowest_k(scores, config.k)
        state.steps.append(
            ChainStep(step=state.step, remaining_before=tuple(remaining), scores=scores, removed=removed)
        )
        state.eliminated.append((state.step, removed))
        remaining = [c for c in remaining if c not in removed]

    state.remaining = tuple(remaining)
    prompt = build(narrative, state.remaining)
    state.final_scores = score_options(model, prompt, state.remaining)
    final = _argmax(state.final_scores)
    return final, state


def replay_chain_trace(state: ChainState, initial_options: tuple[int, ...]) -> int:
    """Independently reconstruct the final class from a recorded trace."""
    remaining = list(initial_options)
    for step_no, removed in state.eliminated:
        for code in removed:
            if code not in remaining:
                raise ChainError(f"trace step {step_no} removes {code} which is not remaining")
            remaining.remove(code)
    if tuple(remaining) != state.remaining:
        raise ChainError("trace remaining set does not match eliminations")
    if not state.final_scores:
        raise ChainError("trace has no final scores")
    return _argmax({c: state.final_scores[c] for c in remaining})
