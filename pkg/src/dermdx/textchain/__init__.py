"""Text classification pipeline: prompt construction, adapters, option chains."""

from dermdx.textchain.prompts import PROMPT_MODES, PromptError, PromptSpec, build_prompt
from dermdx.textchain.examples import (
    TextTrainExample,
    make_chain_training_examples,
    make_plain_example,
    make_prediction_augmented_example,
)
from dermdx.textchain.lora import AdapterConfig, LoRALinear, apply_lora, trainable_fraction
from dermdx.textchain.chain import ChainConfig, ChainState, run_chain, score_options
from dermdx.textchain.models import load_text_model
from dermdx.textchain.train import TextTrainConfig, finetune

__all__ = [
    "PROMPT_MODES",
    "PromptError",
    "PromptSpec",
    "build_prompt",
    "TextTrainExample",
    "make_chain_training_examples",
    "make_plain_example",
    "make_prediction_augmented_example",
    "AdapterConfig",
    "LoRALinear",
    "apply_lora",
    "trainable_fraction",
    "ChainConfig",
    "ChainState",
    "run_chain",
    "score_options",
    "load_text_model",
    "TextTrainConfig",
    "finetune",
]
