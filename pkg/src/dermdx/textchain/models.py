"""Text classifier backends: the bundled tiny model, test stubs, checkpoints.

The tiny classifier hashes whitespace-ish tokens into embedding buckets and
classifies the mean embedding; it exists so the whole text pipeline trains
and runs in CI.  Stub backends give deterministic scores for contract
fixtures and harness checks.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from dermdx.registry import ClassRegistry
from dermdx.textchain.lora import AdapterConfig, AdapterError, apply_lora
from dermdx.textchain.prompts import DEFAULT_PREDICTIONS_TEMPLATE, ITEM_JOIN

TEXT_CHECKPOINT_KIND = "text"
MODEL_TYPE_TINY = "tiny-lora"
MODEL_TYPE_STUB_FIXED = "stub-fixed"
MODEL_TYPE_STUB_ECHO = "stub-echo"
MODEL_TYPE_STUB_KEYWORD = "stub-keyword"

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def hash_tokens(text: str, buckets: int) -> list[int]:
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        return [0]
    return [zlib.crc32(tok.encode()) % buckets for tok in tokens]


@dataclass(frozen=True)
class TinyTextConfig:
    buckets: int = 4096
    embed_dim: int = 64
    hidden_dim: int = 64
    seed: int = 0

    def to_dict(self) -> dict:
        return {"buckets": self.buckets, "embed_dim": self.embed_dim, "hidden_dim": self.hidden_dim, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "TinyTextConfig":
        return cls(**data)


class TinyTextClassifier(nn.Module):
    def __init__(self, num_classes: int, config: TinyTextConfig = TinyTextConfig()):
        super().__init__()
        self.config = config
        with torch.random.fork_rng():
            torch.manual_seed(config.seed)
            self.embedding = nn.EmbeddingBag(config.buckets, config.embed_dim, mode="mean")
            self.encoder = nn.Sequential(nn.Linear(config.embed_dim, config.hidden_dim), nn.ReLU())
            self.head = nn.Linear(config.hidden_dim, num_classes)

    def forward(self, texts: list[str]) -> torch.Tensor:
        flat: list[int] = []
        offsets: list[int] = []
        for text in texts:
            offsets.append(len(flat))
            flat.extend(hash_tokens(text, self.config.buckets))
        ids = torch.tensor(flat, dtype=torch.long)
        offs = torch.tensor(offsets, dtype=torch.long)
        return self.head(self.encoder(self.embedding(ids, offs)))


TINY_ADAPTER_TARGETS = ["encoder.0"]

BASE_BUILDERS = {
    "tiny": lambda num_classes, base_cfg: TinyTextClassifier(num_classes, base_cfg),
}


def build_adapted_model(
    num_classes: int, adapter: AdapterConfig, base_cfg: TinyTextConfig = TinyTextConfig()
) -> nn.Module:
    """Base model with adapters applied and the classification head trainable."""
    try:
        builder = BASE_BUILDERS[adapter.base_model_id]
    except KeyError:
        raise AdapterError(
            f"base model {adapter.base_model_id!r} is not bundled (available: {sorted(BASE_BUILDERS)}). "
            "Larger sequence-classification bases need their own weights; register a builder in "
            "dermdx.textchain.models.BASE_BUILDERS that loads them, then rerun."
        )
    model = builder(num_classes, base_cfg)
    apply_lora(model, TINY_ADAPTER_TARGETS, adapter)
    for p in model.head.parameters():
        p.requires_grad_(True)
    return model


class TextModelHandle:
    """Loaded text classifier: prompt strings in, per-class logits out."""

    model_id = "base"

    def __init__(self, registry: ClassRegistry):
        self.registry = registry

    def predict_logits(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError


class TorchTextModel(TextModelHandle):
    model_id = "tiny-lora"

    def __init__(self, module: nn.Module, registry: ClassRegistry):
        super().__init__(registry)
        self.module = module
        self.module.eval()

    def predict_logits(self, texts: list[str]) -> np.ndarray:
        with torch.no_grad():
            return self.module(texts).cpu().numpy()


class FixedScoreTextStub(TextModelHandle):
    model_id = "stub-fixed"

    def __init__(self, logits: list[float], registry: ClassRegistry):
        super().__init__(registry)
        arr = np.asarray(logits, dtype=np.float64)
        if len(arr) != len(registry):
            raise ValueError(f"stub logits length {len(arr)} != registry size {len(registry)}")
        self.logits = arr

    def predict_logits(self, texts: list[str]) -> np.ndarray:
        return np.tile(self.logits, (len(texts), 1))


class EchoFirstPredictionStub(TextModelHandle):
    """Scores the first image-model recommendation highest; uniform without one.

    Parses the canonical predictions section, so it only understands prompts
    built with the default template.
    """

    model_id = "stub-echo"

    def __init__(self, registry: ClassRegistry, predictions_template: str = DEFAULT_PREDICTIONS_TEMPLATE):
        super().__init__(registry)
        prefix, _, suffix = predictions_template.partition("{items}")
        self._prefix = prefix
        self._suffix = suffix

    def _first_prediction(self, text: str) -> int | None:
        start = text.rfind(self._prefix)
        if start < 0:
            return None
        rest = text[start + len(self._prefix):]
        end = rest.find(self._suffix) if self._suffix else len(rest)
        if end < 0:
            return None
        items = rest[:end].split(ITEM_JOIN)
        try:
            return self.registry.code_of(items[0])
        except KeyError:
            return None

    def predict_logits(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), len(self.registry)))
        for i, text in enumerate(texts):
            code = self._first_prediction(text)
            if code is not None:
                out[i, code] = 10.0
        return out


class KeywordMatchTextStub(TextModelHandle):
    """Logit per class = scaled count of that class's keywords in the text."""

    model_id = "stub-keyword"

    def __init__(self, keyword_map: dict[int, list[str]], registry: ClassRegistry, scale: float = 5.0):
        super().__init__(registry)
        for code in keyword_map:
            if code not in registry:
                raise ValueError(f"keyword map class {code} not in registry")
        self.keyword_map = {int(c): list(words) for c, words in keyword_map.items()}
        self.scale = scale

    def predict_logits(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), len(self.registry)))
        for i, text in enumerate(texts):
            lowered = text.lower()
            for code, words in self.keyword_map.items():
                out[i, code] = self.scale * sum(lowered.count(w.lower()) for w in words)
        return out


def _atomic_save(bundle: dict, path: str | Path) -> None:
    from dermdx.vision.checkpoint import atomic_torch_save

    atomic_torch_save(bundle, path)


def save_tiny_text_checkpoint(
    path: str | Path,
    registry: ClassRegistry,
    adapter: AdapterConfig,
    base_config: TinyTextConfig,
    state_dict: dict,
    history: list[dict],
    best_val_acc: float | None,
) -> None:
    _atomic_save(
        {
            "kind": TEXT_CHECKPOINT_KIND,
            "model_type": MODEL_TYPE_TINY,
            "registry": registry.to_dict(),
            "adapter": adapter.to_dict(),
            "base": base_config.to_dict(),
            "state_dict": state_dict,
            "history": history,
            "best_val_acc": best_val_acc,
        },
        path,
    )


def save_stub_text_checkpoint(
    path: str | Path,
    registry: ClassRegistry,
    stub_type: str,
    logits: list[float] | None = None,
    keyword_map: dict[int, list[str]] | None = None,
) -> None:
    if stub_type not in (MODEL_TYPE_STUB_FIXED, MODEL_TYPE_STUB_ECHO, MODEL_TYPE_STUB_KEYWORD):
        raise ValueError(f"unknown stub type {stub_type!r}")
    bundle: dict = {
        "kind": TEXT_CHECKPOINT_KIND,
        "model_type": stub_type,
        "registry": registry.to_dict(),
        "adapter": None,
        "history": [],
        "best_val_acc": None,
    }
    if stub_type == MODEL_TYPE_STUB_FIXED:
        bundle["logits"] = list(map(float, logits or []))
    if stub_type == MODEL_TYPE_STUB_KEYWORD:
        bundle["keyword_map"] = {str(c): list(ws) for c, ws in (keyword_map or {}).items()}
    _atomic_save(bundle, path)


def load_text_model(path: str | Path) -> TextModelHandle:
    bundle = torch.load(path, map_location="cpu", weights_only=False)
    if bundle.get("kind") != TEXT_CHECKPOINT_KIND:
        raise ValueError(f"{path} is not a text checkpoint (kind={bundle.get('kind')!r})")
    registry = ClassRegistry.from_dict(bundle["registry"])
    model_type = bundle["model_type"]
    if model_type == MODEL_TYPE_TINY:
        adapter = AdapterConfig.from_dict(bundle["adapter"])
        base_cfg = TinyTextConfig.from_dict(bundle["base"])
        module = build_adapted_model(len(registry), adapter, base_cfg)
        module.load_state_dict(bundle["state_dict"])
        return TorchTextModel(module, registry)
    if model_type == MODEL_TYPE_STUB_FIXED:
        return FixedScoreTextStub(bundle["logits"], registry)
    if model_type == MODEL_TYPE_STUB_ECHO:
        return EchoFirstPredictionStub(registry)
    if model_type == MODEL_TYPE_STUB_KEYWORD:
        keyword_map = {int(c): ws for c, ws in bundle["keyword_map"].items()}
        return KeywordMatchTextStub(keyword_map, registry)
    raise ValueError(f"unknown text model type {model_type!r}")
