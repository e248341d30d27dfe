"""
Training loss: intent negative log-likelihood for the primary slot and the
remaining slots, plus pointer-position negative log-likelihood.

Probabilities are clamped at EPS before the log. Every term is averaged over
the batch and the decode steps; slot 1 feeds ``l_primary`` and every later
slot feeds ``l_non_primary``.
"""
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import torch

from core.corpus import Batch
from core.decoder import ModelOutput
from core.errors import ObjectiveError

EPS = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    l_primary: torch.Tensor
    l_non_primary: torch.Tensor
    l_span: torch.Tensor
    total: torch.Tensor

    @classmethod
    def assemble(cls, l_primary, l_non_primary, l_span) -> "LossBreakdown":
        l_primary, l_non_primary, l_span = (torch.as_tensor(x) for x in (l_primary, l_non_primary, l_span))
        return cls(l_primary, l_non_primary, l_span, l_primary + l_non_primary + l_span)

    def as_floats(self) -> Dict[str, float]:
        return {
            "l_primary": float(self.l_primary),
            "l_non_primary": float(self.l_non_primary),
            "l_span": float(self.l_span),
            "total": float(self.total),
        }

    def is_finite(self) -> bool:
        return bool(torch.isfinite(self.total))


def gold_log_prob(dist: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
    """log p[gold] per row, clamped at EPS; dist is (B, C) and gold is (B,)."""
    if gold.numel() and (gold.min() < 0 or gold.max() >= dist.shape[-1]):
        raise ObjectiveError(
            f"gold index out of range [0, {dist.shape[-1]}): min={int(gold.min())}, max={int(gold.max())}"
        )
    picked = dist.gather(-1, gold.long().unsqueeze(-1)).squeeze(-1)
    return torch.log(picked.clamp_min(EPS))


def intent_loss(
    coarse_dists: Sequence[torch.Tensor],
    fine_dists: Sequence[torch.Tensor],
    gold_coarse: torch.Tensor,
    gold_fine: torch.Tensor,
) -> torch.Tensor:
    """Mean over batch and steps of -log p(coarse) - log p(fine) for one slot.

    ``coarse_dists`` / ``fine_dists`` hold one (B, C) tensor per decode step.
    """
    if len(coarse_dists) != len(fine_dists) or not coarse_dists:
        raise ObjectiveError("intent_loss needs the same non-zero number of coarse and fine steps")
    per_step = [
        -(gold_log_prob(coarse, gold_coarse) + gold_log_prob(fine, gold_fine))
        for coarse, fine in zip(coarse_dists, fine_dists)
    ]
    return torch.stack(per_step).mean()


def span_loss(
    pointer_dists: Sequence[Sequence[Tuple[torch.Tensor, torch.Tensor]]],
    gold_start: torch.Tensor,
    gold_end: torch.Tensor,
    mask: torch.Tensor,
) -> torch.Tensor:
    """Mean over batch and steps of -Σ_slots [log start[gold] + log end[gold]].

    ``pointer_dists[t][k]`` is the (start, end) pair of slot k at step t, each
    (B, n); gold positions are (B, N).
    """
    n_slots = gold_start.shape[1]
    for positions in (gold_start, gold_end):
        if positions.numel() and (positions.min() < 0 or positions.max() >= mask.shape[1]):
            raise ObjectiveError(f"gold position outside sentence width {mask.shape[1]}")
        if not mask.gather(1, positions).all():
            rows = (~mask.gather(1, positions)).nonzero()[0].tolist()
            raise ObjectiveError(f"gold position on a padded index (example {rows[0]}, slot {rows[1] + 1})")
    per_step = []
    for slots in pointer_dists:
        if len(slots) != n_slots:
            raise ObjectiveError(f"model emits {len(slots)} slots but gold has {n_slots}")
        step_total = 0
        for k, (start, end) in enumerate(slots):
            step_total = step_total - (gold_log_prob(start, gold_start[:, k]) + gold_log_prob(end, gold_end[:, k]))
        per_step.append(step_total)
    return torch.stack(per_step).mean()


def total_loss(output: ModelOutput, batch: Batch) -> LossBreakdown:
    """Assemble primary, non-primary and span terms; the same gold is the target at every step."""
    if not batch.has_gold:
        raise ObjectiveError("batch carries no gold annotations")
    device = output.mask.device
    gold_start, gold_end = batch.gold_start.to(device), batch.gold_end.to(device)
    gold_coarse, gold_fine = batch.gold_coarse.to(device), batch.gold_fine.to(device)
    n_slots = len(output.steps[0].slots)
    if gold_start.shape[1] != n_slots:
        raise ObjectiveError(f"model emits {n_slots} slots but gold has {gold_start.shape[1]}")

    def slot_intent_loss(k: int) -> torch.Tensor:
        return intent_loss(
            [step.slots[k].coarse_dist for step in output.steps],
            [step.slots[k].fine_dist for step in output.steps],
            gold_coarse[:, k],
            gold_fine[:, k],
        )

    l_primary = slot_intent_loss(0)
    l_non_primary = torch.zeros((), dtype=l_primary.dtype, device=device)
    for k in range(1, n_slots):
        l_non_primary = l_non_primary + slot_intent_loss(k)
    l_span = span_loss(
        [[(slot.start_dist, slot.end_dist) for slot in step.slots] for step in output.steps],
        gold_start,
        gold_end,
        output.mask,
    )
    return LossBreakdown.assemble(l_primary, l_non_primary, l_span)
