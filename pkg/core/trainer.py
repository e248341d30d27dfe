"""
Teacher-forced training loop, checkpoint IO and loss-curve emission.
"""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import torch
from pydantic import BaseModel, Field

from core.corpus import DatasetSplit, Vocab, build_vocab, iter_batches, make_batch, validate_split
from core.errors import CheckpointError, NonFiniteLossError, TaxonomyMismatchError, TrainingError
from core.logger import run_logger
from core.model import IntentModel, ModelConfig
from core.objective import LossBreakdown, total_loss
from core.taxonomy import Taxonomy
from utils.helpers import set_seeds

PathLike = Union[str, Path]

CHECKPOINT_FORMAT_VERSION = 1
LOSS_CURVE_HEADER = ("epoch", "train_total", "train_primary", "train_non_primary", "train_span", "dev_total")
DTYPES = {"float32": torch.float32, "float64": torch.float64}


class TrainConfig(BaseModel):
    learning_rate: float = Field(default=1e-5, gt=0)
    weight_decay: float = Field(default=1e-5, ge=0)
    dropout_rate: float = Field(default=0.5, ge=0.0, lt=1.0)
    epochs: int = Field(default=5, ge=1)
    batch_size: int = Field(default=16, ge=1)
    seed: int = 0
    optimizer: Literal["adam"] = "adam"
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0)
    dtype: Literal["float32", "float64"] = "float32"
    shuffle: bool = True
    device: str = "cpu"


@dataclass(frozen=True)
class EpochLosses:
    epoch: int
    train_total: float
    train_primary: float
    train_non_primary: float
    train_span: float
    dev_total: Optional[float] = None

    def row(self) -> List[str]:
        values = [self.train_total, self.train_primary, self.train_non_primary, self.train_span]
        dev = repr(self.dev_total) if self.dev_total is not None else ""
        return [str(self.epoch), *(repr(value) for value in values), dev]


LossCurve = List[EpochLosses]


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    vocab: Vocab
    taxonomy: Taxonomy
    seed: int
    epoch: int
    state_dict: Dict[str, torch.Tensor] = field(repr=False)

    def to_payload(self) -> Dict:
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "encoder_kind": self.model_config.encoder,
            "model_config": self.model_config.model_dump(mode="json"),
            "train_config": self.train_config.model_dump(mode="json"),
            "vocab": self.vocab.to_list(),
            "vocab_digest": self.vocab.digest(),
            "taxonomy": self.taxonomy.to_dict(),
            "taxonomy_digest": self.taxonomy.digest(),
            "seed": self.seed,
            "epoch": self.epoch,
            "state_dict": self.state_dict,
        }

    def build_model(self) -> IntentModel:
        """Rebuild the model in eval mode with the stored parameters."""
        set_seeds(self.seed)
        model = IntentModel(self.model_config, self.vocab, self.taxonomy, self.train_config.dropout_rate)
        model.to(DTYPES[self.train_config.dtype])
        try:
            model.load_state_dict(self.state_dict)
        except RuntimeError as e:
            raise CheckpointError(f"checkpoint parameters do not fit the stored configuration: {e}") from e
        return model.eval()


def save_checkpoint(checkpoint: Checkpoint, path: PathLike):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(checkpoint.to_payload(), path)
    run_logger.artifact_written("checkpoint", path)


def load_checkpoint(path: PathLike, taxonomy: Optional[Taxonomy] = None) -> Checkpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not a checkpoint (no format_version)")
    if payload["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {payload['format_version']} is not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    try:
        vocab = Vocab.from_list(payload["vocab"])
        stored_taxonomy = Taxonomy.from_dict(payload["taxonomy"])
        checkpoint = Checkpoint(
            model_config=ModelConfig(**payload["model_config"]),
            train_config=TrainConfig(**payload["train_config"]),
            vocab=vocab,
            taxonomy=stored_taxonomy,
            seed=int(payload["seed"]),
            epoch=int(payload["epoch"]),
            state_dict=payload["state_dict"],
        )
    except KeyError as e:
        raise CheckpointError(f"checkpoint {path} is missing field {e.args[0]!r}") from e

    if vocab.digest() != payload["vocab_digest"]:
        raise CheckpointError(
            f"vocab hash mismatch: stored {payload['vocab_digest']}, computed {vocab.digest()}"
        )
    if stored_taxonomy.digest() != payload["taxonomy_digest"]:
        raise CheckpointError(
            f"taxonomy hash mismatch: stored {payload['taxonomy_digest']}, computed {stored_taxonomy.digest()}"
        )
    if taxonomy is not None and taxonomy.digest() != stored_taxonomy.digest():
        raise TaxonomyMismatchError(
            f"taxonomy hash mismatch: checkpoint {stored_taxonomy.digest()}, given {taxonomy.digest()}"
        )
    return checkpoint


def emit_loss_curve(curve: LossCurve, path: PathLike):
    if not curve:
        raise TrainingError("loss curve is empty")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(LOSS_CURVE_HEADER)
        for losses in curve:
            writer.writerow(losses.row())
    run_logger.artifact_written("loss curve", path)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    curve: LossCurve
    model: IntentModel


class Trainer:
    """Owns the model parameters and optimizer for one training run."""

    def __init__(self, model: IntentModel, config: TrainConfig):
        self.model = model
        self.config = config
        self.optimizer = torch.optim.Adam(
            model.parameters(),
            lr=config.learning_rate,
            betas=config.betas,
            eps=config.eps,
            weight_decay=config.weight_decay,
        )
        self.generator = torch.Generator().manual_seed(config.seed)

    def _batches(self, split: DatasetSplit, shuffle: bool):
        for examples in iter_batches(split.examples, self.config.batch_size, shuffle, self.generator):
            yield make_batch(examples, self.model.vocab, self.model.taxonomy)

    def train_epoch(self, split: DatasetSplit, epoch: int) -> Dict[str, float]:
        self.model.train()
        sums = {"l_primary": 0.0, "l_non_primary": 0.0, "l_span": 0.0, "total": 0.0}
        for index, batch in enumerate(self._batches(split, self.config.shuffle)):
            self.optimizer.zero_grad()
            breakdown = total_loss(self.model(batch, teacher_forcing=True, decode=False), batch)
            if not breakdown.is_finite():
                raise NonFiniteLossError(f"epoch {epoch} batch {index}", breakdown.as_floats())
            breakdown.total.backward()
            self.optimizer.step()
            for key, value in breakdown.as_floats().items():
                sums[key] += value * len(batch)
        return {key: value / len(split) for key, value in sums.items()}

    def loss(self, split: DatasetSplit) -> LossBreakdown:
        """Mean teacher-forced loss over a split in eval mode."""
        self.model.eval()
        sums = torch.zeros(3, dtype=torch.float64)
        with torch.no_grad():
            for batch in self._batches(split, shuffle=False):
                breakdown = total_loss(self.model(batch, teacher_forcing=True, decode=False), batch)
                parts = torch.stack([breakdown.l_primary, breakdown.l_non_primary, breakdown.l_span])
                sums += parts.double().cpu() * len(batch)
        means = sums / len(split)
        return LossBreakdown.assemble(means[0], means[1], means[2])

    def fit(self, train_split: DatasetSplit, dev_split: Optional[DatasetSplit] = None) -> Tuple[LossCurve, int, Dict]:
        curve: LossCurve = []
        best_dev, best_epoch, best_state = None, 0, None
        for epoch in range(1, self.config.epochs + 1):
            means = self.train_epoch(train_split, epoch)
            dev_total = None
            if dev_split is not None and len(dev_split):
                dev_total = float(self.loss(dev_split).total)
            curve.append(
                EpochLosses(
                    epoch=epoch,
                    train_total=means["total"],
                    train_primary=means["l_primary"],
                    train_non_primary=means["l_non_primary"],
                    train_span=means["l_span"],
                    dev_total=dev_total,
                )
            )
            run_logger.epoch_end(epoch, means["total"], dev_total)
            # without a dev split the last epoch wins
            if best_state is None or dev_total is None or dev_total < best_dev:
                best_dev, best_epoch = dev_total, epoch
                best_state = {name: tensor.detach().clone() for name, tensor in self.model.state_dict().items()}
        self.model.load_state_dict(best_state)
        self.model.eval()
        return curve, best_epoch, best_state


def train(
    train_split: DatasetSplit,
    dev_split: Optional[DatasetSplit],
    model_config: ModelConfig,
    train_config: TrainConfig,
    taxonomy: Taxonomy,
    vocab: Optional[Vocab] = None,
) -> TrainResult:
    """Train from scratch and return the best-dev checkpoint with its loss curve."""
    if not len(train_split):
        raise TrainingError("training split is empty")
    validate_split(train_split, taxonomy)
    if dev_split is not None:
        validate_split(dev_split, taxonomy)
    for split in (train_split, dev_split):
        if split is None:
            continue
        counts = {len(example.triplets) for example in split.examples}
        if counts - {model_config.n_slots}:
            raise TrainingError(
                f"split {split.name!r} has intent counts {sorted(counts)} but the model has "
                f"{model_config.n_slots} slots"
            )

    run_logger.step(f"Training on {len(train_split)} examples for {train_config.epochs} epochs")
    set_seeds(train_config.seed)
    vocab = vocab or build_vocab(train_split)
    model = IntentModel(model_config, vocab, taxonomy, train_config.dropout_rate)
    model.to(device=train_config.device, dtype=DTYPES[train_config.dtype])

    trainer = Trainer(model, train_config)
    curve, best_epoch, best_state = trainer.fit(train_split, dev_split)
    checkpoint = Checkpoint(
        model_config=model_config,
        train_config=train_config,
        vocab=vocab,
        taxonomy=taxonomy,
        seed=train_config.seed,
        epoch=best_epoch,
        state_dict={name: tensor.cpu() for name, tensor in best_state.items()},
    )
    run_logger.info(f"Best epoch: {best_epoch}")
    return TrainResult(checkpoint=checkpoint, curve=curve, model=model)
