"""
Intent label spaces and the fine-to-coarse clustering.

A taxonomy maps every fine (dataset-level) intent to exactly one coarse
intent. Label names are compared byte-exact after trimming surrounding
whitespace; no case folding is applied.
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from config.settings import settings
from core.errors import TaxonomyError, UnknownLabelError
from utils.helpers import FileHelper, HashHelper

PathLike = Union[str, Path]

SELF_CLUSTER_SUFFIX = "_cluster"

# Coarse cluster counts reported for the bundled datasets.
REFERENCE_COARSE_COUNTS: Dict[str, int] = {
    "snips": 4,
    "facebook": 5,
    "hwu64": 18,
    "banking77": 12,
    "clinc150": 120,
}


class Granularity(str, Enum):
    COARSE = "coarse"
    FINE = "fine"


@dataclass(frozen=True)
class IntentLabel:
    name: str
    granularity: Granularity = Granularity.FINE

    def __post_init__(self):
        canonical = canonical_label(self.name)
        if not canonical:
            raise TaxonomyError("intent label name must be non-empty")
        object.__setattr__(self, "name", canonical)
        object.__setattr__(self, "granularity", Granularity(self.granularity))

    def __str__(self) -> str:
        return self.name


def canonical_label(name: str) -> str:
    """Trim surrounding whitespace; everything else is significant."""
    return name.strip()


@dataclass(frozen=True)
class ValidationResult:
    passed: bool
    expected: int
    actual: int
    message: str

    def __bool__(self) -> bool:
        return self.passed


@dataclass(frozen=True)
class Taxonomy:
    """Immutable fine-to-coarse mapping for one dataset family."""

    dataset_name: str
    coarse_to_fine: Mapping[str, Tuple[str, ...]]
    _fine_to_coarse: Dict[str, str] = field(init=False, repr=False, compare=False)
    _coarse_index: Dict[str, int] = field(init=False, repr=False, compare=False)
    _fine_index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        normalized: Dict[str, Tuple[str, ...]] = {}
        fine_to_coarse: Dict[str, str] = {}
        for raw_coarse, raw_fines in self.coarse_to_fine.items():
            coarse = canonical_label(raw_coarse)
            if not coarse:
                raise TaxonomyError("empty coarse label name")
            if coarse in normalized:
                raise TaxonomyError(f"duplicate coarse label: {coarse!r}")
            fines = [canonical_label(fine) for fine in raw_fines]
            if not fines:
                raise TaxonomyError(f"empty coarse cluster: {coarse!r}")
            for fine in fines:
                if not fine:
                    raise TaxonomyError(f"empty fine label name under {coarse!r}")
                if fine in fine_to_coarse:
                    raise TaxonomyError(
                        f"duplicate fine label: {fine!r} (under {fine_to_coarse[fine]!r} and {coarse!r})"
                    )
                fine_to_coarse[fine] = coarse
            normalized[coarse] = tuple(sorted(fines))

        collisions = sorted(set(normalized) & set(fine_to_coarse))
        if collisions:
            raise TaxonomyError(f"label used as both coarse and fine: {collisions[0]!r}")

        ordered = {coarse: normalized[coarse] for coarse in sorted(normalized)}
        object.__setattr__(self, "coarse_to_fine", ordered)
        object.__setattr__(self, "_fine_to_coarse", fine_to_coarse)
        object.__setattr__(self, "_coarse_index", {name: i for i, name in enumerate(ordered)})
        object.__setattr__(
            self, "_fine_index", {name: i for i, name in enumerate(sorted(fine_to_coarse))}
        )

    @classmethod
    def self_clustered(cls, dataset_name: str, fines: Iterable[str]) -> "Taxonomy":
        """Degenerate taxonomy in which every fine label is its own cluster."""
        return cls(
            dataset_name,
            {f"{canonical_label(fine)}{SELF_CLUSTER_SUFFIX}": [fine] for fine in fines},
        )

    @classmethod
    def from_dict(cls, data: Mapping) -> "Taxonomy":
        if not isinstance(data, Mapping):
            raise TaxonomyError("taxonomy file must contain a JSON object")
        if "coarse_to_fine" not in data:
            raise TaxonomyError("taxonomy file is missing 'coarse_to_fine'")
        mapping = data["coarse_to_fine"]
        if not isinstance(mapping, Mapping):
            raise TaxonomyError("'coarse_to_fine' must be an object of coarse -> [fine]")
        for coarse, fines in mapping.items():
            if not isinstance(fines, list) or not all(isinstance(f, str) for f in fines):
                raise TaxonomyError(f"cluster {coarse!r} must be a list of strings")
        return cls(str(data.get("dataset", "")), mapping)

    def to_dict(self) -> Dict:
        return {
            "dataset": self.dataset_name,
            "coarse_to_fine": {coarse: list(fines) for coarse, fines in self.coarse_to_fine.items()},
        }

    def digest(self) -> str:
        return HashHelper.sha256_json(self.to_dict())

    @property
    def coarse_labels(self) -> Tuple[str, ...]:
        return tuple(self._coarse_index)

    @property
    def fine_labels(self) -> Tuple[str, ...]:
        return tuple(self._fine_index)

    @property
    def sizes(self) -> Tuple[int, int]:
        return len(self._coarse_index), len(self._fine_index)

    def coarse_of(self, fine: Union[str, IntentLabel]) -> str:
        if isinstance(fine, IntentLabel):
            if fine.granularity is not Granularity.FINE:
                raise TaxonomyError(f"coarse_of expects a fine label, got coarse {fine.name!r}")
            fine = fine.name
        name = canonical_label(fine)
        try:
            return self._fine_to_coarse[name]
        except KeyError:
            raise UnknownLabelError(name, "fine") from None

    def has_fine(self, fine: str) -> bool:
        return canonical_label(fine) in self._fine_to_coarse

    def has_coarse(self, coarse: str) -> bool:
        return canonical_label(coarse) in self._coarse_index

    def coarse_index(self, coarse: str) -> int:
        try:
            return self._coarse_index[canonical_label(coarse)]
        except KeyError:
            raise UnknownLabelError(coarse, "coarse") from None

    def fine_index(self, fine: str) -> int:
        try:
            return self._fine_index[canonical_label(fine)]
        except KeyError:
            raise UnknownLabelError(fine, "fine") from None

    def coarse_name(self, index: int) -> str:
        return self.coarse_labels[index]

    def fine_name(self, index: int) -> str:
        return self.fine_labels[index]


def coarse_of(taxonomy: Taxonomy, fine: Union[str, IntentLabel]) -> IntentLabel:
    """Return the coarse label whose cluster contains ``fine``."""
    return IntentLabel(taxonomy.coarse_of(fine), Granularity.COARSE)


def validate_expected_sizes(taxonomy: Taxonomy, expected_coarse: int) -> ValidationResult:
    actual = len(taxonomy.coarse_labels)
    if actual == expected_coarse:
        return ValidationResult(True, expected_coarse, actual, f"{taxonomy.dataset_name}: {actual} coarse labels")
    return ValidationResult(
        False,
        expected_coarse,
        actual,
        f"{taxonomy.dataset_name}: expected {expected_coarse} coarse labels, actual={actual}",
    )


def load_taxonomy(path: PathLike) -> Taxonomy:
    try:
        data = FileHelper.read_json(path)
    except json.JSONDecodeError as e:
        raise TaxonomyError(f"cannot parse taxonomy {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise TaxonomyError(f"taxonomy {path} is not valid UTF-8: {e.reason} at byte {e.start}") from e
    except OSError as e:
        raise TaxonomyError(f"cannot read taxonomy {path}: {e}") from e
    return Taxonomy.from_dict(data)


def save_taxonomy(taxonomy: Taxonomy, path: PathLike):
    FileHelper.write_json(path, taxonomy.to_dict())


def bundled_taxonomy_path(name: str) -> Path:
    return settings.get_data_dir() / "taxonomies" / f"{name}.json"


def load_bundled_taxonomy(name: str) -> Taxonomy:
    """Load one of the transcribed taxonomies shipped under data/taxonomies."""
    path = bundled_taxonomy_path(name)
    if not path.exists():
        available = sorted(p.stem for p in path.parent.glob("*.json"))
        raise TaxonomyError(f"no bundled taxonomy {name!r}; available: {', '.join(available)}")
    return load_taxonomy(path)


def bundled_taxonomy_names() -> List[str]:
    return sorted(p.stem for p in (settings.get_data_dir() / "taxonomies").glob("*.json"))


def check_label_space(taxonomy: Taxonomy, fines: Iterable[str], coarses: Optional[Iterable[str]] = None):
    """Raise UnknownLabelError for the first label the taxonomy does not know."""
    for fine in fines:
        if not taxonomy.has_fine(fine):
            raise UnknownLabelError(fine, "fine")
    for coarse in coarses or ():
        if not taxonomy.has_coarse(coarse):
            raise UnknownLabelError(coarse, "coarse")
