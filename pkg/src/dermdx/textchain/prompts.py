"""Prompt construction for narrative classification.

Six modes: the bare narrative, narrative plus an explicit name-to-code
mapping, narrative plus an implicit options list (names only), narrative
plus image-model recommendations, and the two prediction+list combinations.
Sections always render in the order narrative, predictions, options/mapping.
Everything is byte-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

from dermdx.registry import ClassRegistry

PLAIN = "plain"
EXPLICIT_MAPPING = "explicit_mapping"
IMPLICIT_OPTIONS = "implicit_options"
PREDICTIONS = "predictions"
PREDICTIONS_PLUS_MAPPING = "predictions_plus_mapping"
PREDICTIONS_PLUS_OPTIONS = "predictions_plus_options"

PROMPT_MODES = (
    PLAIN,
    EXPLICIT_MAPPING,
    IMPLICIT_OPTIONS,
    PREDICTIONS,
    PREDICTIONS_PLUS_MAPPING,
    PREDICTIONS_PLUS_OPTIONS,
)

_MAPPING_MODES = {EXPLICIT_MAPPING, PREDICTIONS_PLUS_MAPPING}
_OPTIONS_MODES = {IMPLICIT_OPTIONS, PREDICTIONS_PLUS_OPTIONS}
_PREDICTION_MODES = {PREDICTIONS, PREDICTIONS_PLUS_MAPPING, PREDICTIONS_PLUS_OPTIONS}

DEFAULT_SEPARATOR = "\n\n"
DEFAULT_PREDICTIONS_TEMPLATE = "Initial recommendations from the image model: {items}."
DEFAULT_OPTIONS_TEMPLATE = "The possible diseases are: {items}."
DEFAULT_MAPPING_TEMPLATE = "Answer with the value mapped to the disease: {items}."
ITEM_JOIN = "; "
MAPPING_ARROW = " → "  # "Dermatofibroma → 1"


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class PromptSpec:
    mode: str = PLAIN
    options: tuple[int, ...] = ()
    predictions: tuple[int, ...] = ()
    separator: str = DEFAULT_SEPARATOR
    predictions_template: str = DEFAULT_PREDICTIONS_TEMPLATE
    options_template: str = DEFAULT_OPTIONS_TEMPLATE
    mapping_template: str = DEFAULT_MAPPING_TEMPLATE

    def __post_init__(self) -> None:
        if self.mode not in PROMPT_MODES:
            raise PromptError(f"unknown prompt mode {self.mode!r}; expected one of {PROMPT_MODES}")
        if self.mode in (_MAPPING_MODES | _OPTIONS_MODES) and not self.options:
            raise PromptError(f"mode {self.mode!r} requires a nonempty options list")
        if self.mode in _PREDICTION_MODES and not self.predictions:
            raise PromptError(f"mode {self.mode!r} requires a nonempty predictions list")

    @classmethod
    def full_options(
        cls, mode: str, registry: ClassRegistry, predictions: tuple[int, ...] = (), **kwargs
    ) -> "PromptSpec":
        """Spec with the options list covering the whole registry."""
        return cls(mode=mode, options=tuple(registry.codes), predictions=tuple(predictions), **kwargs)

    def validate_against(self, registry: ClassRegistry) -> None:
        for code in self.options:
            if code not in registry:
                raise PromptError(f"option code {code} not in registry {registry.version!r}")
        for code in self.predictions:
            if code not in registry:
                raise PromptError(f"prediction code {code} not in registry {registry.version!r}")


def render_predictions_section(spec: PromptSpec, registry: ClassRegistry) -> str:
    items = ITEM_JOIN.join(registry.name_of(c) for c in spec.predictions)
    return spec.predictions_template.format(items=items)


def render_options_section(spec: PromptSpec, registry: ClassRegistry) -> str:
    items = ITEM_JOIN.join(registry.name_of(c) for c in spec.options)
    return spec.options_template.format(items=items)


def render_mapping_section(spec: PromptSpec, registry: ClassRegistry) -> str:
    items = ITEM_JOIN.join(f"{registry.name_of(c)}{MAPPING_ARROW}{c}" for c in spec.options)
    return spec.mapping_template.format(items=items)


def build_prompt(narrative: str, spec: PromptSpec, registry: ClassRegistry) -> str:
    """Assemble narrative -> predictions -> options/mapping for the chosen mode."""
    spec.validate_against(registry)
    parts = [narrative]
    if spec.mode in _PREDICTION_MODES:
        parts.append(render_predictions_section(spec, registry))
    if spec.mode in _MAPPING_MODES:
        parts.append(render_mapping_section(spec, registry))
    elif spec.mode in _OPTIONS_MODES:
        parts.append(render_options_section(spec, registry))
    return spec.separator.join(parts)
