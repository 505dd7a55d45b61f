"""Patient-narrative corpus: symptom profiles, generation prompts, splits.

Narratives are imported from files; this module never calls a chat service.
The prompt builder exists so a user can regenerate the corpus offline with
their own model.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

from dermdx.registry import ClassRegistry

logger = logging.getLogger(__name__)

CORPUS_FORMAT = "dermdx-corpus"
CORPUS_FORMAT_VERSION = 1

EXPECTED_STORIES_PER_CLASS = 10

GENERATION_PROMPT_TEMPLATE = (
    "Pretending you are a patient, please construct a one paragraph "
    'patient narrative using these symptoms: "{keywords}"'
)


class CorpusError(Exception):
    pass


@dataclass(frozen=True)
class DiseaseProfile:
    class_code: int
    symptoms: list[str]
    source_summary: str = ""

    def __post_init__(self) -> None:
        if not self.symptoms:
            raise CorpusError(f"disease profile for class {self.class_code} has no symptoms")


@dataclass(frozen=True)
class Narrative:
    id: str
    class_code: int
    keywords: list[str]
    generation_prompt: str
    story: str
    split: str | None = None

    def __post_init__(self) -> None:
        if not self.story:
            raise CorpusError(f"narrative {self.id} has an empty story")


@dataclass
class NarrativeCorpus:
    registry: ClassRegistry
    narratives: list[Narrative]
    split_seed: int | None = None

    def __post_init__(self) -> None:
        for n in self.narratives:
            if n.class_code not in self.registry:
                raise CorpusError(f"narrative {n.id} has class code {n.class_code} not in registry")

    def by_class(self) -> dict[int, list[Narrative]]:
        table: dict[int, list[Narrative]] = {}
        for n in self.narratives:
            table.setdefault(n.class_code, []).append(n)
        return table

    def subset(self, split: str) -> list[Narrative]:
        return [n for n in self.narratives if n.split == split]

    def to_jsonl(self) -> str:
        header = {
            "format": CORPUS_FORMAT,
            "format_version": CORPUS_FORMAT_VERSION,
            "registry": self.registry.to_dict(),
            "split_seed": self.split_seed,
        }
        lines = [json.dumps(header, ensure_ascii=False)]
        for n in self.narratives:
            lines.append(
                json.dumps(
                    {
                        "id": n.id,
                        "class_name": self.registry.name_of(n.class_code),
                        "keywords": n.keywords,
                        "generation_prompt": n.generation_prompt,
                        "story": n.story,
                        "split": n.split,
                    },
                    ensure_ascii=False,
                )
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "NarrativeCorpus":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise CorpusError("empty corpus file")
        header = json.loads(lines[0])
        if header.get("format") != CORPUS_FORMAT:
            raise CorpusError(f"not a {CORPUS_FORMAT} file (format={header.get('format')!r})")
        if header.get("format_version") != CORPUS_FORMAT_VERSION:
            raise CorpusError(f"unsupported corpus format_version {header.get('format_version')!r}")
        registry = ClassRegistry.from_dict(header["registry"])
        narratives = []
        for line in lines[1:]:
            rec = json.loads(line)
            narratives.append(
                Narrative(
                    id=rec["id"],
                    class_code=registry.code_of(rec["class_name"]),
                    keywords=list(rec["keywords"]),
                    generation_prompt=rec["generation_prompt"],
                    story=rec["story"],
                    split=rec["split"],
                )
            )
        return cls(registry=registry, narratives=narratives, split_seed=header["split_seed"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NarrativeCorpus":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def build_generation_prompt(keywords: list[str]) -> str:
    """Canonical story-generation prompt; keywords joined by ', ', verbatim."""
    if not keywords:
        raise CorpusError("keywords must be nonempty")
    return GENERATION_PROMPT_TEMPLATE.format(keywords=", ".join(keywords))


@dataclass
class ValidationReport:
    per_class_counts: dict[int, int]
    under_expected: dict[int, int] = field(default_factory=dict)
    over_expected: dict[int, int] = field(default_factory=dict)
    duplicate_story_ids: list[list[str]] = field(default_factory=list)
    empty_story_ids: list[str] = field(default_factory=list)
    expected_per_class: int = EXPECTED_STORIES_PER_CLASS

    @property
    def total(self) -> int:
        return sum(self.per_class_counts.values())

    @property
    def ok(self) -> bool:
        return not (self.under_expected or self.over_expected or self.duplicate_story_ids or self.empty_story_ids)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "expected_per_class": self.expected_per_class,
            "per_class_counts": {str(k): v for k, v in sorted(self.per_class_counts.items())},
            "under_expected": {str(k): v for k, v in sorted(self.under_expected.items())},
            "over_expected": {str(k): v for k, v in sorted(self.over_expected.items())},
            "duplicate_story_ids": self.duplicate_story_ids,
            "empty_story_ids": self.empty_story_ids,
            "ok": self.ok,
        }


def validate_corpus(corpus: NarrativeCorpus, expected_per_class: int = EXPECTED_STORIES_PER_CLASS) -> ValidationReport:
    """Report-only corpus check: counts, unders/overs, exact-duplicate stories, empties."""
    counts = {code: len(group) for code, group in sorted(corpus.by_class().items())}
    under = {c: n for c, n in counts.items() if n < expected_per_class}
    over = {c: n for c, n in counts.items() if n > expected_per_class}

    by_story: dict[str, list[str]] = {}
    empty: list[str] = []
    for n in corpus.narratives:
        if not n.story.strip():
            empty.append(n.id)
        by_story.setdefault(n.story, []).append(n.id)
    duplicates = [sorted(ids) for story, ids in by_story.items() if len(ids) > 1]
    duplicates.sort()

    return ValidationReport(
        per_class_counts=counts,
        under_expected=under,
        over_expected=over,
        duplicate_story_ids=duplicates,
        empty_story_ids=empty,
        expected_per_class=expected_per_class,
    )


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def split_corpus(corpus: NarrativeCorpus, seed: int, train_fraction: float = 0.7) -> NarrativeCorpus:
    """Per-class train/val split (default 70/30), deterministic under seed."""
    by_class = corpus.by_class()
    too_small = sorted(c for c, group in by_class.items() if len(group) < 2)
    if too_small:
        raise CorpusError(f"classes with fewer than 2 narratives cannot be split: {too_small}")

    rng = random.Random(seed)
    out: list[Narrative] = []
    for code in sorted(by_class):
        group = sorted(by_class[code], key=lambda n: n.id)
        rng.shuffle(group)
        train_count = _round_half_up(train_fraction * len(group))
        for i, narrative in enumerate(group):
            out.append(replace(narrative, split="train" if i < train_count else "val"))
    out.sort(key=lambda n: n.id)
    return NarrativeCorpus(registry=corpus.registry, narratives=out, split_seed=seed)
