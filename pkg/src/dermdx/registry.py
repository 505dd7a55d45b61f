"""Disease class registry: the ordered label set every other module keys on."""

from __future__ import annotations

from dataclasses import dataclass, field


def _normalize_name(name: str) -> str:
    return " ".join(name.split()).lower()


@dataclass(frozen=True)
class ClassRegistry:
    """Ordered set of disease labels with contiguous integer codes.

    Codes are 0..n-1 in list order; names must be unique after whitespace
    and case normalization.
    """

    classes: tuple[tuple[int, str], ...]
    version: str = "unversioned"
    _by_code: dict[int, str] = field(init=False, repr=False, compare=False, default_factory=dict)
    _by_name: dict[str, int] = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        codes = [code for code, _ in self.classes]
        if codes != list(range(len(self.classes))):
            raise ValueError(f"class codes must be contiguous 0..{len(self.classes) - 1}, got {codes}")
        by_code = {code: name for code, name in self.classes}
        by_name: dict[str, int] = {}
        for code, name in self.classes:
            key = _normalize_name(name)
            if not key:
                raise ValueError(f"class {code} has an empty name")
            if key in by_name:
                raise ValueError(f"duplicate class name after normalization: {name!r}")
            by_name[key] = code
        object.__setattr__(self, "_by_code", by_code)
        object.__setattr__(self, "_by_name", by_name)

    @classmethod
    def from_names(cls, names: list[str] | tuple[str, ...], version: str = "unversioned") -> "ClassRegistry":
        return cls(classes=tuple(enumerate(names)), version=version)

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def codes(self) -> list[int]:
        return [code for code, _ in self.classes]

    @property
    def names(self) -> list[str]:
        return [name for _, name in self.classes]

    def name_of(self, code: int) -> str:
        try:
            return self._by_code[code]
        except KeyError:
            raise KeyError(f"unknown class code {code} (registry {self.version!r} has {len(self)} classes)")

    def code_of(self, name: str) -> int:
        try:
            return self._by_name[_normalize_name(name)]
        except KeyError:
            raise KeyError(f"unknown class name {name!r} in registry {self.version!r}")

    def __contains__(self, code: object) -> bool:
        return code in self._by_code

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "classes": [{"code": code, "name": name} for code, name in self.classes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassRegistry":
        return cls(
            classes=tuple((entry["code"], entry["name"]) for entry in data["classes"]),
            version=data["version"],
        )


# Canonical 26-class skin-disease registry.  The code assignment is fixed by
# the published explicit mapping (Dermatofibroma -> 1, the Lichen-Planus
# class -> 7); remaining classes keep their source-table order.
SKIN26_NAMES = (
    "Acne and Rosacea",
    "Dermatofibroma",
    "Atopic Dermatitis",
    "Basal Cell Carcinoma (BCC)",
    "Benign Keratosis-like Lesions (BKL)",
    "Bullous Disease",
    "Cellulitis Impetigo and other Bacterial Infections",
    "Psoriasis pictures Lichen Planus and related diseases",
    "Eczema",
    "Exanthems and Drug Eruptions",
    "Hair Loss Alopecia and other Hair Diseases",
    "Light Diseases and Disorders of Pigmentation",
    "Lupus and other Connective Tissue diseases",
    "Melanocytic Nevi (NV)",
    "Melanoma Skin Cancer Nevi and Moles",
    "Nail Fungus and other Nail Disease",
    "Poison Ivy and other Contact Dermatitis",
    "Scabies Lyme Disease and other Infestations and Bites",
    "Seborrheic Keratoses and other Benign Tumors",
    "Systemic Disease",
    "Tinea Ringworm Candidiasis and other Fungal Infections",
    "Urticaria Hives",
    "Vascular Tumors",
    "Vasculitis",
    "Warts Molluscum and other Viral Infections",
    "Squamous cell carcinoma",
)

SKIN26_VERSION = "skin26-v1"


def skin26_registry() -> ClassRegistry:
    """The default 26-class registry used by the full-scale configuration."""
    return ClassRegistry.from_names(SKIN26_NAMES, version=SKIN26_VERSION)
