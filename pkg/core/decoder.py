"""
Pointer-network decoder.

Each decode step attends over the token encoding, advances an LSTM sequence
generator fed with the tuple history, runs one pointer block per intent slot
to pick span boundaries, and classifies coarse and fine intents per slot.
Slot k > 1 reads the hidden sequence of slot k - 1, so spans are extracted in
a fixed chain.
"""
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import torch
from pydantic import BaseModel, Field
from torch import nn

from core.corpus import IntentSpanTriplet
from core.encoder import glorot_init_, run_packed_lstm
from core.errors import DecoderError
from core.taxonomy import Taxonomy

TupleFeed = Literal["accumulated", "previous"]


class DecoderConfig(BaseModel):
    encoder_dim: int = Field(gt=0)
    hidden_dim: int = Field(default=128, gt=0)
    pointer_hidden: int = Field(default=128, gt=0)
    n_slots: int = Field(default=2, ge=1)
    n_steps: int = Field(default=1, ge=1)
    coarse_label_count: int = Field(ge=1)
    fine_label_count: int = Field(ge=1)
    dropout_rate: float = Field(default=0.5, ge=0.0, lt=1.0)
    tuple_feed: TupleFeed = "accumulated"

    @property
    def span_dim(self) -> int:
        return 4 * self.pointer_hidden

    @property
    def tuple_dim(self) -> int:
        return self.n_slots * self.span_dim


def check_mask(mask: torch.Tensor):
    if mask.dim() != 2 or mask.shape[1] == 0 or not mask.any(dim=1).all():
        raise DecoderError("every sentence needs at least one unmasked token")


def masked_softmax(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Softmax over the last axis; masked positions get probability 0."""
    return logits.masked_fill(~mask, float("-inf")).softmax(dim=-1)


class AdditiveAttention(nn.Module):
    """Additive attention with query W_h·h_prev + W_t·tup_prev."""

    def __init__(self, encoder_dim: int, hidden_dim: int, tuple_dim: int, attention_dim: int):
        super().__init__()
        self.query_hidden = nn.Linear(hidden_dim, attention_dim, bias=False)
        self.query_tuple = nn.Linear(tuple_dim, attention_dim, bias=False)
        self.key = nn.Linear(encoder_dim, attention_dim)
        self.score = nn.Linear(attention_dim, 1, bias=False)

    def forward(
        self,
        h_prev: torch.Tensor,
        tup_prev: torch.Tensor,
        vectors: torch.Tensor,
        mask: torch.Tensor,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        query = self.query_hidden(h_prev) + self.query_tuple(tup_prev)
        energies = self.score(torch.tanh(self.key(vectors) + query.unsqueeze(1))).squeeze(-1)
        weights = masked_softmax(energies, mask)
        context = torch.bmm(weights.unsqueeze(1), vectors).squeeze(1)
        return context, weights


def attend(
    attention: AdditiveAttention,
    h_prev: torch.Tensor,
    tup_prev: torch.Tensor,
    vectors: torch.Tensor,
    mask: torch.Tensor,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Context vector and attention weights; raises when a row is fully masked."""
    check_mask(mask)
    return attention(h_prev, tup_prev, vectors, mask)


def generator_step(
    cell: nn.LSTMCell,
    context: torch.Tensor,
    tup_prev: torch.Tensor,
    state: Optional[Tuple[torch.Tensor, torch.Tensor]] = None,
) -> Tuple[torch.Tensor, Tuple[torch.Tensor, torch.Tensor]]:
    inputs = torch.cat([context, tup_prev], dim=-1)
    if inputs.shape[-1] != cell.input_size:
        raise DecoderError(f"generator expects input width {cell.input_size}, got {inputs.shape[-1]}")
    h, c = cell(inputs, state)
    return h, (h, c)


def accumulate_tuple(history: Sequence[torch.Tensor], zero: torch.Tensor) -> torch.Tensor:
    """Elementwise sum of every previously emitted tuple vector (``zero`` when empty)."""
    total = zero
    for tup in history:
        total = total + tup
    return total


class PointerBlock(nn.Module):
    """Bi-LSTM over per-token rows with start/end heads."""

    def __init__(self, input_dim: int, pointer_hidden: int):
        super().__init__()
        self.input_dim = input_dim
        self.lstm = nn.LSTM(input_dim, pointer_hidden, batch_first=True, bidirectional=True)
        self.start_head = nn.Linear(2 * pointer_hidden, 1)
        self.end_head = nn.Linear(2 * pointer_hidden, 1)

    def forward(self, rows: torch.Tensor, mask: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        hidden = run_packed_lstm(self.lstm, rows, mask)
        start = masked_softmax(self.start_head(hidden).squeeze(-1), mask)
        end = masked_softmax(self.end_head(hidden).squeeze(-1), mask)
        return start, end, hidden


def pointer_block(block: PointerBlock, rows: torch.Tensor, mask: torch.Tensor):
    check_mask(mask)
    return block(rows, mask)


def span_vector(start_dist: torch.Tensor, end_dist: torch.Tensor, hidden: torch.Tensor) -> torch.Tensor:
    """[Σ_j start_j·h_j ; Σ_j end_j·h_j] for (B, n) weights and (B, n, H) states."""
    start_pool = torch.bmm(start_dist.unsqueeze(1), hidden).squeeze(1)
    end_pool = torch.bmm(end_dist.unsqueeze(1), hidden).squeeze(1)
    return torch.cat([start_pool, end_pool], dim=-1)


class IntentDetector(nn.Module):
    """Per-slot coarse and fine classification heads over [tup ; h^D]."""

    def __init__(self, input_dim: int, n_slots: int, coarse_count: int, fine_count: int):
        super().__init__()
        self.coarse_heads = nn.ModuleList(nn.Linear(input_dim, coarse_count) for _ in range(n_slots))
        self.fine_heads = nn.ModuleList(nn.Linear(input_dim, fine_count) for _ in range(n_slots))

    def forward(self, tup: torch.Tensor, h: torch.Tensor) -> List[Tuple[torch.Tensor, torch.Tensor]]:
        features = torch.cat([tup, h], dim=-1)
        return [
            (coarse(features).softmax(dim=-1), fine(features).softmax(dim=-1))
            for coarse, fine in zip(self.coarse_heads, self.fine_heads)
        ]


def classify_intents(detector: IntentDetector, tup: torch.Tensor, h: torch.Tensor):
    return detector(tup, h)


@dataclass
class SlotOutput:
    start_dist: torch.Tensor
    end_dist: torch.Tensor
    coarse_dist: torch.Tensor
    fine_dist: torch.Tensor


@dataclass
class StepOutput:
    slots: List[SlotOutput]
    attention: torch.Tensor


@dataclass
class ModelOutput:
    steps: List[StepOutput]
    mask: torch.Tensor
    decoded_steps: List[List[List[IntentSpanTriplet]]] = field(default_factory=list)

    @property
    def decoded(self) -> List[List[IntentSpanTriplet]]:
        """Triplets of the first decode step, one list per example."""
        return self.decoded_steps[0] if self.decoded_steps else []

    def distributions(self) -> List[torch.Tensor]:
        out = []
        for step in self.steps:
            out.append(step.attention)
            for slot in step.slots:
                out.extend([slot.start_dist, slot.end_dist, slot.coarse_dist, slot.fine_dist])
        return out


def one_hot_positions(positions: torch.Tensor, width: int, dtype: torch.dtype) -> torch.Tensor:
    return nn.functional.one_hot(positions, num_classes=width).to(dtype)


class PointerDecoder(nn.Module):
    def __init__(self, config: DecoderConfig):
        super().__init__()
        self.config = config
        d_e, d_h, d_p = config.encoder_dim, config.hidden_dim, config.pointer_hidden
        self.attention = AdditiveAttention(d_e, d_h, config.tuple_dim, d_h)
        self.generator = nn.LSTMCell(d_e + config.tuple_dim, d_h)
        self.pointers = nn.ModuleList(
            PointerBlock(d_h + d_e if k == 0 else 2 * d_p + d_h + d_e, d_p) for k in range(config.n_slots)
        )
        self.detector = IntentDetector(
            config.tuple_dim + d_h, config.n_slots, config.coarse_label_count, config.fine_label_count
        )
        self.dropout = nn.Dropout(config.dropout_rate)
        glorot_init_(self)

    def forward(
        self,
        vectors: torch.Tensor,
        mask: torch.Tensor,
        gold_start: Optional[torch.Tensor] = None,
        gold_end: Optional[torch.Tensor] = None,
    ) -> ModelOutput:
        """Run all decode steps; gold (B, N) positions drive the tuple history when given."""
        check_mask(mask)
        batch_size, width, _ = vectors.shape
        teacher_forcing = gold_start is not None and gold_end is not None
        zero_tuple = vectors.new_zeros((batch_size, self.config.tuple_dim))
        h = vectors.new_zeros((batch_size, self.config.hidden_dim))
        state = (h, vectors.new_zeros((batch_size, self.config.hidden_dim)))
        history: List[torch.Tensor] = []
        steps = []
        for _ in range(self.config.n_steps):
            if self.config.tuple_feed == "accumulated":
                tup_prev = accumulate_tuple(history, zero_tuple)
            else:
                tup_prev = history[-1] if history else zero_tuple
            context, weights = self.attention(state[0], tup_prev, vectors, mask)
            h, state = generator_step(self.generator, context, tup_prev, state)
            h_d = self.dropout(h)

            slots, soft_spans, fed_spans = [], [], []
            previous_hidden = None
            for k, block in enumerate(self.pointers):
                parts = [h_d.unsqueeze(1).expand(-1, width, -1), vectors]
                if previous_hidden is not None:
                    parts.insert(0, previous_hidden)
                start, end, hidden = block(torch.cat(parts, dim=-1), mask)
                hidden = self.dropout(hidden)
                soft_spans.append(span_vector(start, end, hidden))
                if teacher_forcing:
                    fed_spans.append(
                        span_vector(
                            one_hot_positions(gold_start[:, k], width, vectors.dtype),
                            one_hot_positions(gold_end[:, k], width, vectors.dtype),
                            hidden,
                        )
                    )
                slots.append((start, end))
                previous_hidden = hidden

            tup = torch.cat(soft_spans, dim=-1)
            labels = self.detector(tup, h_d)
            history.append(torch.cat(fed_spans, dim=-1) if teacher_forcing else tup)
            steps.append(
                StepOutput(
                    slots=[
                        SlotOutput(start, end, coarse, fine)
                        for (start, end), (coarse, fine) in zip(slots, labels)
                    ],
                    attention=weights,
                )
            )
        return ModelOutput(steps=steps, mask=mask)


def greedy_span(start_dist: torch.Tensor, end_dist: torch.Tensor, mask: torch.Tensor) -> Tuple[int, int]:
    """Argmax start, then argmax end over real positions >= start; ties go to the lowest index."""
    start = int(torch.argmax(start_dist.masked_fill(~mask, -1.0)))
    positions = torch.arange(end_dist.shape[0], device=end_dist.device)
    allowed = mask & (positions >= start)
    end = int(torch.argmax(end_dist.masked_fill(~allowed, -1.0)))
    return start, end


def decode_greedy(step: StepOutput, mask: torch.Tensor, taxonomy: Taxonomy) -> List[List[IntentSpanTriplet]]:
    decoded = []
    for row in range(mask.shape[0]):
        triplets = []
        for k, slot in enumerate(step.slots):
            start, end = greedy_span(slot.start_dist[row], slot.end_dist[row], mask[row])
            triplets.append(
                IntentSpanTriplet(
                    start=start,
                    end=end,
                    coarse=taxonomy.coarse_name(int(torch.argmax(slot.coarse_dist[row]))),
                    fine=taxonomy.fine_name(int(torch.argmax(slot.fine_dist[row]))),
                    primary=k == 0,
                )
            )
        decoded.append(triplets)
    return decoded
