"""Waterbird class taxonomy: raw annotation labels folded into trained classes.

The built-in default maps the 24 raw survey labels onto the 16 classes the
detectors are trained on (15 named classes plus a catch-all "Other"), and
flags the 7 under-represented classes targeted by oversampling. Custom
taxonomies can be loaded from a JSON file with the same structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError


class UnknownClass(InputError):
    """A raw class name has no entry in the fold map."""

    def __init__(self, name: str):
        super().__init__(f"unknown raw class name: {name!r}")
        self.name = name


@dataclass(frozen=True)
class RawClass:
    name: str
    abbreviation: str
    trained: str  # trained class this raw label folds into


@dataclass(frozen=True)
class ClassTaxonomy:
    """Raw-to-trained class mapping with minority flags.

    Invariants checked at construction: the fold map is total (every raw
    class targets an existing trained class), raw and trained names are
    unique, and every minority class is a trained class.
    """

    trained_classes: tuple[str, ...]
    raw_classes: tuple[RawClass, ...]
    minority_classes: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if not self.trained_classes:
            raise ValueError("taxonomy needs at least one trained class")
        if len(set(self.trained_classes)) != len(self.trained_classes):
            raise ValueError("duplicate trained class names")
        raw_names = [r.name for r in self.raw_classes]
        if len(set(raw_names)) != len(raw_names):
            raise ValueError("duplicate raw class names")
        trained = set(self.trained_classes)
        for r in self.raw_classes:
            if r.trained not in trained:
                raise ValueError(
                    f"raw class {r.name!r} folds to unknown class {r.trained!r}"
                )
        stray = self.minority_classes - trained
        if stray:
            raise ValueError(f"minority classes not in trained set: {sorted(stray)}")

    @property
    def fold_map(self) -> dict[str, str]:
        return {r.name: r.trained for r in self.raw_classes}

    def fold(self, raw_name: str) -> str:
        """Trained class for a raw label; raises UnknownClass when unmapped."""
        for r in self.raw_classes:
            if r.name == raw_name:
                return r.trained
        raise UnknownClass(raw_name)

    def is_trained(self, name: str) -> bool:
        return name in self.trained_classes

    def is_minority(self, trained_name: str) -> bool:
        return trained_name in self.minority_classes

    def abbreviation_of(self, raw_name: str) -> str:
        for r in self.raw_classes:
            if r.name == raw_name:
                return r.abbreviation
        raise UnknownClass(raw_name)


# The 15 named survey classes, in their conventional reporting order, plus
# the catch-all. Species at different maturity or in flight are distinct
# classes because they look different from above.
_TRAINED = (
    "Mixed Tern Adult",
    "Laughing Gull Adult",
    "Brown Pelican Adult",
    "White Ibis Adult",
    "Reddish Egret Adult",
    "Black Skimmer Adult",
    "Cattle Egret Adult",
    "Black-crowned Night Heron Adult",
    "Tri-colored Heron Adult",
    "Mixed Egret",
    "Great Blue Heron Adult",
    "Roseate Spoonbill Adult",
    "Brown Pelican Chick",
    "Mixed Tern Flying",
    "Laughing Gull Flying",
    "Other",
)

_MINORITY = frozenset(
    {
        "Brown Pelican Adult",
        "White Ibis Adult",
        "Reddish Egret Adult",
        "Tri-colored Heron Adult",
        "Great Blue Heron Adult",
        "Roseate Spoonbill Adult",
        "Brown Pelican Chick",
    }
)

_RAW = (
    # 15 labels kept as their own trained class
    ("Mixed Tern Adult", "MTA", "Mixed Tern Adult"),
    ("Laughing Gull Adult", "LGA", "Laughing Gull Adult"),
    ("Brown Pelican Adult", "BPA", "Brown Pelican Adult"),
    ("White Ibis Adult", "WIA", "White Ibis Adult"),
    ("Reddish Egret Adult", "REA", "Reddish Egret Adult"),
    ("Black Skimmer Adult", "BSA", "Black Skimmer Adult"),
    ("Cattle Egret Adult", "CEA", "Cattle Egret Adult"),
    ("Black-crowned Night Heron Adult", "BCNHA", "Black-crowned Night Heron Adult"),
    ("Tri-colored Heron Adult", "TCHA", "Tri-colored Heron Adult"),
    ("Mixed Egret", "MEG", "Mixed Egret"),
    ("Great Blue Heron Adult", "GBHA", "Great Blue Heron Adult"),
    ("Roseate Spoonbill Adult", "RSA", "Roseate Spoonbill Adult"),
    ("Brown Pelican Chick", "BPC", "Brown Pelican Chick"),
    ("Mixed Tern Flying", "MTF", "Mixed Tern Flying"),
    ("Laughing Gull Flying", "LGF", "Laughing Gull Flying"),
    # 9 under-annotated labels folded into the catch-all
    ("Great Egret Adult", "GEA", "Other"),
    ("Snowy Egret Adult", "SEA", "Other"),
    ("Brown Pelican Juvenile", "BPJ", "Other"),
    ("Brown Pelican Flying", "BPF", "Other"),
    ("Great Blue Heron Chick", "GBHC", "Other"),
    ("Great Blue Heron Flying", "GBHF", "Other"),
    ("Laughing Gull Chick", "LGC", "Other"),
    ("Black Skimmer Flying", "BSF", "Other"),
    ("Other", "OTHR", "Other"),
)


def default_taxonomy() -> ClassTaxonomy:
    """The built-in survey taxonomy: 24 raw labels, 16 trained classes."""
    return ClassTaxonomy(
        trained_classes=_TRAINED,
        raw_classes=tuple(RawClass(n, a, t) for n, a, t in _RAW),
        minority_classes=_MINORITY,
    )


def load_taxonomy(path: str | Path) -> ClassTaxonomy:
    """Read a taxonomy JSON file.

    Expected keys: "trained_classes" (ordered list), "raw_classes" (list of
    {"name", "abbreviation", "trained"}), "minority_classes" (list).
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read taxonomy file {path}: {exc}") from exc
    try:
        return ClassTaxonomy(
            trained_classes=tuple(data["trained_classes"]),
            raw_classes=tuple(
                RawClass(r["name"], r.get("abbreviation", ""), r["trained"])
                for r in data["raw_classes"]
            ),
            minority_classes=frozenset(data.get("minority_classes", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed taxonomy file {path}: {exc}") from exc


def save_taxonomy(taxonomy: ClassTaxonomy, path: str | Path) -> None:
    payload = {
        "trained_classes": list(taxonomy.trained_classes),
        "raw_classes": [
            {"name": r.name, "abbreviation": r.abbreviation, "trained": r.trained}
            for r in taxonomy.raw_classes
        ],
        "minority_classes": sorted(taxonomy.minority_classes),
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
