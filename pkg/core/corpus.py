"""
Multi-intent corpora: tokenization, pairing of single-intent utterances into
multi-intent examples, JSONL persistence, k-shot subsetting, vocabularies and
padded batches.
"""
import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import torch

from core.errors import (
    CoarseCollisionError,
    CorpusError,
    CorpusFormatError,
    ExampleValidationError,
    SynthesisExhaustedError,
    UnknownLabelError,
)
from core.logger import run_logger
from core.taxonomy import Taxonomy
from utils.helpers import FileHelper, HashHelper

PathLike = Union[str, Path]

SPLIT_NAMES = ("train", "dev", "test")
DEFAULT_JOINER = ", "
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1


class Language(str, Enum):
    EN = "en"
    ES = "es"
    TH = "th"
    OTHER = "other"

    @classmethod
    def parse(cls, code: Optional[str]) -> "Language":
        if code is None:
            return cls.EN
        try:
            return cls(code.strip().lower())
        except ValueError:
            return cls.OTHER


class PrimaryPolicy(str, Enum):
    SECOND_SPAN = "second-span-primary"
    FIRST_SPAN = "first-span-primary"
    ANNOTATED = "annotated"


def tokenize(text: str) -> List[str]:
    """Split on Unicode whitespace; punctuation stays attached, case is kept."""
    return text.split()


@dataclass(frozen=True)
class Utterance:
    text: str
    fine_intent: str
    language: Language = Language.EN
    primary: Optional[bool] = None

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"utterance text is empty (fine intent {self.fine_intent!r})")
        object.__setattr__(self, "language", Language.parse(self.language))


@dataclass(frozen=True)
class IntentSpanTriplet:
    """One intent span with inclusive 0-based token bounds and its labels."""

    start: int
    end: int
    coarse: str
    fine: str
    primary: bool = False

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ExampleValidationError(f"invalid span ({self.start}, {self.end})")

    @property
    def positions(self) -> range:
        return range(self.start, self.end + 1)

    def to_dict(self) -> Dict:
        return {
            "start": self.start,
            "end": self.end,
            "coarse": self.coarse,
            "fine": self.fine,
            "primary": self.primary,
        }


@dataclass(frozen=True)
class MultiIntentExample:
    id: str
    tokens: Tuple[str, ...]
    triplets: Tuple[IntentSpanTriplet, ...]
    language: Language = Language.EN
    both_primary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "triplets", tuple(self.triplets))
        object.__setattr__(self, "language", Language.parse(self.language))

    @property
    def primary(self) -> IntentSpanTriplet:
        return self.triplets[0]

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def to_dict(self) -> Dict:
        record = {
            "id": self.id,
            "tokens": list(self.tokens),
            "language": self.language.value,
            "intents": [triplet.to_dict() for triplet in self.triplets],
        }
        if self.both_primary:
            record["both_primary"] = True
        return record


@dataclass
class DatasetSplit:
    name: str
    examples: List[MultiIntentExample] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for example in self.examples:
            if example.id in seen:
                raise ExampleValidationError(f"duplicate example id {example.id!r} in split {self.name!r}")
            seen.add(example.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def ids(self) -> List[str]:
        return [example.id for example in self.examples]


def validate_example(example: MultiIntentExample, taxonomy: Optional[Taxonomy] = None):
    """Raise ExampleValidationError when an invariant does not hold."""
    where = f"example {example.id!r}"
    if not example.triplets:
        raise ExampleValidationError(f"{where}: no intents")
    n_tokens = len(example.tokens)
    for triplet in example.triplets:
        if triplet.end >= n_tokens:
            raise ExampleValidationError(
                f"{where}: span ({triplet.start}, {triplet.end}) outside {n_tokens} tokens"
            )
    flagged = sum(triplet.primary for triplet in example.triplets)
    if flagged != 1:
        raise ExampleValidationError(f"{where}: expected exactly one primary intent, found {flagged}")
    if not example.triplets[0].primary:
        raise ExampleValidationError(f"{where}: primary intent must occupy slot 1")
    covered = set()
    for triplet in example.triplets:
        positions = set(triplet.positions)
        if covered & positions:
            raise ExampleValidationError(f"{where}: overlapping intent spans")
        covered |= positions
    if taxonomy is not None:
        for triplet in example.triplets:
            expected = taxonomy.coarse_of(triplet.fine)
            if triplet.coarse != expected:
                raise ExampleValidationError(
                    f"{where}: coarse {triplet.coarse!r} does not match coarse_of({triplet.fine!r}) = {expected!r}"
                )


def validate_split(split: DatasetSplit, taxonomy: Optional[Taxonomy] = None):
    for example in split.examples:
        validate_example(example, taxonomy)


def _primary_index(utterances: Sequence[Utterance], policy: PrimaryPolicy) -> Tuple[int, bool]:
    n = len(utterances)
    if policy is PrimaryPolicy.FIRST_SPAN or n == 1:
        return 0, False
    if policy is PrimaryPolicy.SECOND_SPAN:
        return 1, False
    flagged = [i for i, utterance in enumerate(utterances) if utterance.primary]
    if len(flagged) == 1:
        return flagged[0], False
    # ambiguous: the textual-last flagged span, or the textual-last span if none is flagged
    return (flagged[-1] if flagged else n - 1), True


def synthesize_group(
    utterances: Sequence[Utterance],
    taxonomy: Taxonomy,
    joiner: str = DEFAULT_JOINER,
    primary_policy: Union[PrimaryPolicy, str] = PrimaryPolicy.SECOND_SPAN,
    rng_seed: int = 0,
    example_id: Optional[str] = None,
) -> MultiIntentExample:
    """Splice N single-intent utterances into one example with gold spans."""
    if not utterances:
        raise CorpusError("at least one utterance is required")
    policy = PrimaryPolicy(primary_policy)
    languages = {utterance.language for utterance in utterances}
    if len(languages) > 1:
        raise CorpusError(f"utterances mix languages: {sorted(lang.value for lang in languages)}")

    coarses = [taxonomy.coarse_of(utterance.fine_intent) for utterance in utterances]
    for i in range(len(coarses)):
        for j in range(i + 1, len(coarses)):
            if coarses[i] == coarses[j]:
                raise CoarseCollisionError(
                    f"utterances {i + 1} and {j + 1} share coarse label {coarses[i]!r}"
                )

    joiner_tokens = tokenize(joiner)
    tokens: List[str] = []
    spans: List[Tuple[int, int]] = []
    for index, utterance in enumerate(utterances):
        if index > 0:
            tokens.extend(joiner_tokens)
        piece = tokenize(utterance.text)
        spans.append((len(tokens), len(tokens) + len(piece) - 1))
        tokens.extend(piece)

    primary_at, both_primary = _primary_index(utterances, policy)
    triplets = [
        IntentSpanTriplet(
            start=spans[i][0],
            end=spans[i][1],
            coarse=coarses[i],
            fine=utterances[i].fine_intent.strip(),
            primary=i == primary_at,
        )
        for i in range(len(utterances))
    ]
    ordered = [triplets[primary_at]] + [t for i, t in enumerate(triplets) if i != primary_at]

    if example_id is None:
        example_id = "syn-" + HashHelper.sha256_text(f"{rng_seed}:{' '.join(tokens)}")[:12]
    example = MultiIntentExample(
        id=example_id,
        tokens=tuple(tokens),
        triplets=tuple(ordered),
        language=utterances[0].language,
        both_primary=both_primary,
    )
    validate_example(example, taxonomy)
    return example


def synthesize_pair(
    u1: Utterance,
    u2: Utterance,
    taxonomy: Taxonomy,
    joiner: str = DEFAULT_JOINER,
    primary_policy: Union[PrimaryPolicy, str] = PrimaryPolicy.SECOND_SPAN,
    rng_seed: int = 0,
    example_id: Optional[str] = None,
) -> MultiIntentExample:
    return synthesize_group([u1, u2], taxonomy, joiner, primary_policy, rng_seed, example_id)


def build_corpus(
    pool: Sequence[Utterance],
    taxonomy: Taxonomy,
    counts: Sequence[int],
    n_intents: int = 2,
    rng_seed: int = 0,
    joiner: str = DEFAULT_JOINER,
    primary_policy: Union[PrimaryPolicy, str] = PrimaryPolicy.SECOND_SPAN,
) -> Dict[str, DatasetSplit]:
    """Build train/dev/test splits from a single-intent pool.

    Every example combines ``n_intents`` utterances with pairwise-distinct
    coarse labels; no combination of source utterances is used twice across
    the three splits. Output depends only on the pool order and the seed.
    """
    if len(counts) != len(SPLIT_NAMES) or any(count <= 0 for count in counts):
        raise CorpusError(f"counts must be three positive integers, got {list(counts)}")
    if n_intents < 1:
        raise CorpusError(f"n_intents must be >= 1, got {n_intents}")

    groups: Dict[Language, Dict[str, List[int]]] = defaultdict(lambda: defaultdict(list))
    for index, utterance in enumerate(pool):
        groups[utterance.language][taxonomy.coarse_of(utterance.fine_intent)].append(index)
    eligible = sorted(
        (language for language, by_coarse in groups.items() if len(by_coarse) >= n_intents),
        key=lambda language: language.value,
    )
    if not eligible:
        raise SynthesisExhaustedError(
            f"pool of {len(pool)} utterances has no language with {n_intents} distinct coarse labels"
        )

    rng = random.Random(rng_seed)
    total = sum(counts)
    max_attempts = 100 * total + 1000
    attempts = 0
    used = set()
    splits: Dict[str, DatasetSplit] = {}
    for split_name, count in zip(SPLIT_NAMES, counts):
        examples: List[MultiIntentExample] = []
        while len(examples) < count:
            if attempts >= max_attempts:
                produced = sum(len(split) for split in splits.values()) + len(examples)
                raise SynthesisExhaustedError(
                    f"synthesis exhausted after {attempts} attempts: {produced} of {total} examples built"
                )
            attempts += 1
            language = rng.choice(eligible)
            by_coarse = groups[language]
            chosen_coarse = rng.sample(sorted(by_coarse), n_intents)
            picks = tuple(rng.choice(by_coarse[coarse]) for coarse in chosen_coarse)
            if picks in used:
                continue
            used.add(picks)
            examples.append(
                synthesize_group(
                    [pool[i] for i in picks],
                    taxonomy,
                    joiner=joiner,
                    primary_policy=primary_policy,
                    rng_seed=rng_seed,
                    example_id=f"{split_name}-{len(examples):06d}",
                )
            )
        splits[split_name] = DatasetSplit(split_name, examples)
    run_logger.info(
        f"Synthesized {'/'.join(str(len(s)) for s in splits.values())} examples "
        f"(n_intents={n_intents}, seed={rng_seed})"
    )
    return splits


def _require(record: Mapping, key: str, line_number: int):
    if key not in record:
        raise CorpusFormatError(f"line {line_number}: missing field {key}")
    return record[key]


def _read_lines(path: PathLike) -> Iterator[Tuple[int, str]]:
    try:
        yield from FileHelper.read_jsonl(path)
    except ValueError as e:
        raise CorpusFormatError(f"{path}: {e}") from e


def _parse_line(raw: str, line_number: int) -> Mapping:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"line {line_number}: invalid JSON ({e.msg})") from e
    if not isinstance(record, dict):
        raise CorpusFormatError(f"line {line_number}: expected a JSON object")
    return record


def _example_from_record(record: Mapping, line_number: int) -> MultiIntentExample:
    example_id = _require(record, "id", line_number)
    tokens = _require(record, "tokens", line_number)
    language = record.get("language", Language.EN.value)
    intents = _require(record, "intents", line_number)
    if not isinstance(example_id, str):
        raise CorpusFormatError(f"line {line_number}: field id must be a string")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise CorpusFormatError(f"line {line_number}: field tokens must be a list of strings")
    if not isinstance(intents, list):
        raise CorpusFormatError(f"line {line_number}: field intents must be a list")
    triplets = []
    for intent in intents:
        if not isinstance(intent, dict):
            raise CorpusFormatError(f"line {line_number}: field intents must hold objects")
        values = {key: _require(intent, key, line_number) for key in ("start", "end", "coarse", "fine", "primary")}
        for key in ("start", "end"):
            if not isinstance(values[key], int) or isinstance(values[key], bool):
                raise CorpusFormatError(f"line {line_number}: field {key} must be an integer")
        if not isinstance(values["primary"], bool):
            raise CorpusFormatError(f"line {line_number}: field primary must be a boolean")
        try:
            triplets.append(IntentSpanTriplet(**values))
        except ExampleValidationError as e:
            raise ExampleValidationError(f"line {line_number}: {e}") from e
    return MultiIntentExample(
        id=example_id,
        tokens=tuple(tokens),
        triplets=tuple(triplets),
        language=language,
        both_primary=bool(record.get("both_primary", False)),
    )


def load_jsonl(path: PathLike, name: str = "train", taxonomy: Optional[Taxonomy] = None) -> DatasetSplit:
    examples = []
    seen = set()
    for line_number, raw in _read_lines(path):
        example = _example_from_record(_parse_line(raw, line_number), line_number)
        try:
            validate_example(example, taxonomy)
        except UnknownLabelError as e:
            raise ExampleValidationError(f"line {line_number}: {e}") from e
        except ExampleValidationError as e:
            raise ExampleValidationError(f"line {line_number}: {e}") from e
        if example.id in seen:
            raise ExampleValidationError(f"line {line_number}: duplicate example id {example.id!r}")
        seen.add(example.id)
        examples.append(example)
    run_logger.debug(f"Loaded {len(examples)} examples from {path}")
    return DatasetSplit(name, examples)


def save_jsonl(split: DatasetSplit, path: PathLike):
    FileHelper.write_jsonl(path, (example.to_dict() for example in split.examples))


def load_pool(path: PathLike, taxonomy: Taxonomy) -> List[Utterance]:
    """Read a single-intent pool: one {"text", "fine", "language"?, "primary"?} per line."""
    pool = []
    for line_number, raw in _read_lines(path):
        record = _parse_line(raw, line_number)
        text = _require(record, "text", line_number)
        fine = _require(record, "fine", line_number)
        if not taxonomy.has_fine(fine):
            raise CorpusFormatError(f"line {line_number}: unknown fine label {fine!r}")
        try:
            pool.append(
                Utterance(
                    text=text,
                    fine_intent=fine.strip(),
                    language=record.get("language"),
                    primary=record.get("primary"),
                )
            )
        except CorpusError as e:
            raise CorpusFormatError(f"line {line_number}: {e}") from e
    return pool


def _label_key(example: MultiIntentExample, key: str) -> str:
    if key == "fine":
        return example.primary.fine
    if key == "coarse":
        return example.primary.coarse
    raise CorpusError(f"sampling key must be 'fine' or 'coarse', got {key!r}")


def sample_k_shot(split: DatasetSplit, k: int, key: str = "fine", rng_seed: int = 0) -> DatasetSplit:
    """Keep at most k examples per primary label (uniform, without replacement)."""
    if k < 1:
        raise CorpusError(f"k must be >= 1, got {k}")
    by_label: Dict[str, List[int]] = defaultdict(list)
    for index, example in enumerate(split.examples):
        by_label[_label_key(example, key)].append(index)
    rng = random.Random(rng_seed)
    chosen = set()
    for label in sorted(by_label):
        indices = by_label[label]
        chosen.update(rng.sample(indices, min(k, len(indices))))
    return DatasetSplit(split.name, [split.examples[i] for i in sorted(chosen)])


def sample_fraction(split: DatasetSplit, fraction: float, key: str = "fine", rng_seed: int = 0) -> DatasetSplit:
    """Stratified subset with round(fraction * n) examples per label (at least one)."""
    if not 0.0 < fraction <= 1.0:
        raise CorpusError(f"fraction must be in (0, 1], got {fraction}")
    by_label: Dict[str, List[int]] = defaultdict(list)
    for index, example in enumerate(split.examples):
        by_label[_label_key(example, key)].append(index)
    rng = random.Random(rng_seed)
    chosen = set()
    for label in sorted(by_label):
        indices = by_label[label]
        take = max(1, round(fraction * len(indices)))
        chosen.update(rng.sample(indices, take))
    return DatasetSplit(split.name, [split.examples[i] for i in sorted(chosen)])


@dataclass(frozen=True)
class Vocab:
    tokens: Tuple[str, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.tokens[:2] != (PAD_TOKEN, UNK_TOKEN):
            raise CorpusError(f"vocab must start with {PAD_TOKEN!r}, {UNK_TOKEN!r}")
        index = {token: i for i, token in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise CorpusError("vocab contains duplicate tokens")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.index(token) for token in tokens]

    def to_list(self) -> List[str]:
        return list(self.tokens)

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocab":
        return cls(tuple(tokens))

    def digest(self) -> str:
        return HashHelper.sha256_json(self.to_list())


def build_vocab(split: DatasetSplit, min_count: int = 1) -> Vocab:
    if min_count < 1:
        raise CorpusError(f"min_count must be >= 1, got {min_count}")
    counts = Counter(
        token
        for example in split.examples
        for token in example.tokens
        if token not in (PAD_TOKEN, UNK_TOKEN)
    )
    kept = sorted((token for token, count in counts.items() if count >= min_count), key=lambda t: (-counts[t], t))
    return Vocab((PAD_TOKEN, UNK_TOKEN, *kept))


@dataclass
class Batch:
    """Right-padded batch; gold tensors are (B, N) and absent at inference."""

    ids: List[str]
    tokens: List[List[str]]
    token_ids: torch.Tensor
    mask: torch.Tensor
    gold_start: Optional[torch.Tensor] = None
    gold_end: Optional[torch.Tensor] = None
    gold_coarse: Optional[torch.Tensor] = None
    gold_fine: Optional[torch.Tensor] = None

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def has_gold(self) -> bool:
        return self.gold_start is not None

    @property
    def lengths(self) -> torch.Tensor:
        return self.mask.sum(dim=1)

    def to(self, device: Union[str, torch.device]) -> "Batch":
        def move(tensor):
            return tensor.to(device) if tensor is not None else None

        return Batch(
            ids=self.ids,
            tokens=self.tokens,
            token_ids=move(self.token_ids),
            mask=move(self.mask),
            gold_start=move(self.gold_start),
            gold_end=move(self.gold_end),
            gold_coarse=move(self.gold_coarse),
            gold_fine=move(self.gold_fine),
        )


def tokens_batch(token_lists: Sequence[Sequence[str]], vocab: Vocab, ids: Optional[Sequence[str]] = None) -> Batch:
    width = max((len(tokens) for tokens in token_lists), default=0)
    token_ids = torch.full((len(token_lists), width), PAD_INDEX, dtype=torch.long)
    mask = torch.zeros((len(token_lists), width), dtype=torch.bool)
    for row, tokens in enumerate(token_lists):
        if tokens:
            token_ids[row, : len(tokens)] = torch.tensor(vocab.encode(tokens), dtype=torch.long)
            mask[row, : len(tokens)] = True
    return Batch(
        ids=list(ids) if ids is not None else [str(i) for i in range(len(token_lists))],
        tokens=[list(tokens) for tokens in token_lists],
        token_ids=token_ids,
        mask=mask,
    )


def make_batch(examples: Sequence[MultiIntentExample], vocab: Vocab, taxonomy: Taxonomy) -> Batch:
    batch = tokens_batch([example.tokens for example in examples], vocab, [e.id for e in examples])
    n_slots = {len(example.triplets) for example in examples}
    if len(n_slots) != 1:
        raise ExampleValidationError(f"batch mixes intent counts {sorted(n_slots)}")

    def gather(attribute):
        return torch.tensor(
            [[attribute(triplet) for triplet in example.triplets] for example in examples],
            dtype=torch.long,
        )

    batch.gold_start = gather(lambda t: t.start)
    batch.gold_end = gather(lambda t: t.end)
    batch.gold_coarse = gather(lambda t: taxonomy.coarse_index(t.coarse))
    batch.gold_fine = gather(lambda t: taxonomy.fine_index(t.fine))
    return batch


def iter_batches(
    examples: Sequence[MultiIntentExample],
    batch_size: int,
    shuffle: bool = False,
    generator: Optional[torch.Generator] = None,
) -> Iterator[List[MultiIntentExample]]:
    if shuffle:
        order = torch.randperm(len(examples), generator=generator).tolist()
    else:
        order = list(range(len(examples)))
    for offset in range(0, len(order), batch_size):
        yield [examples[i] for i in order[offset : offset + batch_size]]


def write_manifest(path: PathLike, files: Mapping[str, PathLike], **fields) -> Dict:
    """Record synthesis parameters and file digests; ``manifest_hash`` covers both."""
    manifest = dict(fields)
    manifest["files"] = {name: HashHelper.sha256_file(file) for name, file in sorted(files.items())}
    manifest["manifest_hash"] = HashHelper.sha256_json(manifest)
    FileHelper.write_json(path, manifest)
    return manifest
