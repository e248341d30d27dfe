"""
Tests for the intent and span losses.
"""
import math

import pytest
import torch

from core.corpus import PAD_TOKEN, UNK_TOKEN, Batch, Vocab, make_batch, tokens_batch
from core.decoder import DecoderConfig, ModelOutput, PointerDecoder, SlotOutput, StepOutput
from core.errors import ObjectiveError
from core.model import IntentModel, ModelConfig
from core.objective import LossBreakdown, gold_log_prob, intent_loss, span_loss, total_loss
from core.taxonomy import Taxonomy


def _one_hot(index, width):
    return torch.nn.functional.one_hot(torch.tensor([index]), width).float()


def _uniform(width):
    return torch.full((1, width), 1.0 / width)


def _batch(width, gold_start, gold_end, gold_coarse, gold_fine):
    return Batch(
        ids=["x"],
        tokens=[["w"] * width],
        token_ids=torch.ones((1, width), dtype=torch.long),
        mask=torch.ones((1, width), dtype=torch.bool),
        gold_start=torch.tensor([gold_start]),
        gold_end=torch.tensor([gold_end]),
        gold_coarse=torch.tensor([gold_coarse]),
        gold_fine=torch.tensor([gold_fine]),
    )


@pytest.mark.unit
class TestIntentLoss:
    """Negative log-likelihood of the gold labels."""

    def test_certain_and_correct_is_zero(self):
        loss = intent_loss([_one_hot(1, 3)], [_one_hot(0, 4)], torch.tensor([1]), torch.tensor([0]))
        assert loss.item() == pytest.approx(0.0, abs=1e-9)

    def test_uniform_prediction(self):
        loss = intent_loss([_uniform(2)], [_uniform(5)], torch.tensor([0]), torch.tensor([3]))
        assert loss.item() == pytest.approx(math.log(2) + math.log(5), rel=1e-6)

    def test_zero_probability_is_clamped(self):
        loss = intent_loss([_one_hot(0, 2)], [_one_hot(0, 2)], torch.tensor([1]), torch.tensor([0]))
        assert math.isfinite(loss.item())
        assert loss.item() == pytest.approx(-math.log(1e-12), rel=1e-3)

    def test_averages_over_steps(self):
        loss = intent_loss(
            [_one_hot(0, 2), _uniform(2)], [_one_hot(0, 2), _one_hot(0, 2)], torch.tensor([0]), torch.tensor([0])
        )
        assert loss.item() == pytest.approx(math.log(2) / 2, rel=1e-6)

    def test_out_of_range_label(self):
        with pytest.raises(ObjectiveError, match="out of range"):
            gold_log_prob(_uniform(3), torch.tensor([3]))


@pytest.mark.unit
class TestSpanLoss:
    """Negative log-likelihood of the gold boundaries."""

    def test_one_hot_pointers_are_free(self):
        mask = torch.ones((1, 4), dtype=torch.bool)
        loss = span_loss([[(_one_hot(1, 4), _one_hot(2, 4))]], torch.tensor([[1]]), torch.tensor([[2]]), mask)
        assert loss.item() == pytest.approx(0.0, abs=1e-9)

    def test_uniform_pointers_one_slot(self):
        mask = torch.ones((1, 4), dtype=torch.bool)
        loss = span_loss([[(_uniform(4), _uniform(4))]], torch.tensor([[0]]), torch.tensor([[3]]), mask)
        assert loss.item() == pytest.approx(2 * math.log(4), rel=1e-6)

    def test_uniform_pointers_two_slots(self):
        mask = torch.ones((1, 5), dtype=torch.bool)
        slots = [(_uniform(5), _uniform(5)), (_uniform(5), _uniform(5))]
        loss = span_loss([slots], torch.tensor([[3, 0]]), torch.tensor([[4, 1]]), mask)
        assert loss.item() == pytest.approx(4 * math.log(5), rel=1e-6)

    def test_gold_on_padding(self):
        mask = torch.tensor([[True, True, False]])
        with pytest.raises(ObjectiveError, match="padded index"):
            span_loss([[(_uniform(3), _uniform(3))]], torch.tensor([[0]]), torch.tensor([[2]]), mask)

    def test_gold_beyond_width(self):
        mask = torch.ones((1, 3), dtype=torch.bool)
        with pytest.raises(ObjectiveError, match="outside sentence width"):
            span_loss([[(_uniform(3), _uniform(3))]], torch.tensor([[0]]), torch.tensor([[5]]), mask)

    def test_slot_count_mismatch(self):
        mask = torch.ones((1, 3), dtype=torch.bool)
        with pytest.raises(ObjectiveError, match="1 slots but gold has 2"):
            span_loss([[(_uniform(3), _uniform(3))]], torch.tensor([[0, 1]]), torch.tensor([[0, 1]]), mask)


@pytest.mark.unit
class TestTotalLoss:
    """Assembly of the three terms."""

    def test_assemble_sums_terms(self):
        breakdown = LossBreakdown.assemble(1.0, 2.0, 3.0)
        assert breakdown.as_floats() == {"l_primary": 1.0, "l_non_primary": 2.0, "l_span": 3.0, "total": 6.0}
        assert breakdown.is_finite()

    def test_non_finite_is_detected(self):
        assert not LossBreakdown.assemble(float("nan"), 0.0, 0.0).is_finite()

    def test_primary_and_secondary_slots(self):
        width = 5
        step = StepOutput(
            slots=[
                SlotOutput(_one_hot(3, width), _one_hot(4, width), _uniform(2), _one_hot(1, 4)),
                SlotOutput(_uniform(width), _uniform(width), _one_hot(0, 2), _uniform(4)),
            ],
            attention=_uniform(width),
        )
        output = ModelOutput(steps=[step], mask=torch.ones((1, width), dtype=torch.bool))
        batch = _batch(width, [3, 0], [4, 1], [1, 0], [1, 2])
        breakdown = total_loss(output, batch)
        assert breakdown.l_primary.item() == pytest.approx(math.log(2), rel=1e-6)
        assert breakdown.l_non_primary.item() == pytest.approx(math.log(4), rel=1e-6)
        assert breakdown.l_span.item() == pytest.approx(2 * math.log(5), rel=1e-6)
        assert breakdown.total.item() == pytest.approx(math.log(2) + math.log(4) + 2 * math.log(5), rel=1e-6)

    def test_single_slot_has_no_secondary_term(self):
        step = StepOutput(
            slots=[SlotOutput(_uniform(2), _uniform(2), _uniform(2), _uniform(4))],
            attention=_uniform(2),
        )
        output = ModelOutput(steps=[step], mask=torch.ones((1, 2), dtype=torch.bool))
        breakdown = total_loss(output, _batch(2, [0], [1], [0], [0]))
        assert breakdown.l_non_primary.item() == 0.0

    def test_batch_without_gold(self, tiny_model, toy_vocab):
        batch = tokens_batch([["set", "alarm"]], toy_vocab)
        with torch.no_grad():
            output = tiny_model(batch, decode=False)
        with pytest.raises(ObjectiveError, match="no gold"):
            total_loss(output, batch)

    def test_model_loss_is_positive_and_finite(self, tiny_model, toy_splits, toy_vocab, toy_taxonomy):
        batch = make_batch(list(toy_splits["train"])[:4], toy_vocab, toy_taxonomy)
        breakdown = total_loss(tiny_model(batch, teacher_forcing=True, decode=False), batch)
        assert breakdown.is_finite()
        assert breakdown.total.item() > 0
        breakdown.total.backward()
        assert tiny_model.decoder.attention.key.weight.grad is not None


@pytest.mark.unit
class TestLossGradient:
    """Analytic gradients against central finite differences in float64."""

    def test_gradcheck_through_decoder(self):
        torch.manual_seed(0)
        config = DecoderConfig(
            encoder_dim=3,
            hidden_dim=2,
            pointer_hidden=2,
            n_slots=2,
            n_steps=2,
            coarse_label_count=2,
            fine_label_count=3,
            dropout_rate=0.0,
        )
        decoder = PointerDecoder(config).double().eval()
        mask = torch.tensor([[True, True, True, True], [True, True, True, False]])
        batch = Batch(
            ids=["a", "b"],
            tokens=[["w"] * 4, ["w"] * 3],
            token_ids=torch.ones((2, 4), dtype=torch.long),
            mask=mask,
            gold_start=torch.tensor([[2, 0], [1, 0]]),
            gold_end=torch.tensor([[3, 1], [2, 0]]),
            gold_coarse=torch.tensor([[1, 0], [0, 1]]),
            gold_fine=torch.tensor([[2, 0], [1, 2]]),
        )

        def loss_of(vectors):
            output = decoder(vectors, mask, batch.gold_start, batch.gold_end)
            return total_loss(output, batch).total

        vectors = torch.randn(2, 4, 3, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(loss_of, (vectors,), eps=1e-6, atol=1e-5)

    @pytest.mark.parametrize("n_slots", [1, 2, 3])
    def test_every_model_parameter_matches_central_differences(self, n_slots):
        taxonomy = Taxonomy.from_dict({"dataset": "grad", "coarse_to_fine": {"A": ["a1", "a2"], "B": ["b1"], "C": ["c1"]}})
        vocab = Vocab.from_list([PAD_TOKEN, UNK_TOKEN, "x", "y", "z"])
        config = ModelConfig(embed_dim=4, contextual=True, hidden_dim=4, pointer_hidden=4, n_slots=n_slots)
        torch.manual_seed(0)
        model = IntentModel(config, vocab, taxonomy, dropout_rate=0.0).double().eval()
        batch = tokens_batch([["x", "y", "z"]], vocab)
        batch.gold_start = torch.tensor([[2, 0, 1][:n_slots]])
        batch.gold_end = torch.tensor([[2, 0, 1][:n_slots]])
        batch.gold_coarse = torch.tensor([[1, 0, 2][:n_slots]])
        batch.gold_fine = torch.tensor([[2, 0, 3][:n_slots]])

        def objective():
            return total_loss(model(batch, teacher_forcing=True, decode=False), batch).total

        model.zero_grad()
        objective().backward()
        h = 1e-6
        for name, parameter in model.named_parameters():
            analytic = parameter.grad.clone() if parameter.grad is not None else torch.zeros_like(parameter)
            numeric = torch.zeros_like(parameter)
            flat = parameter.data.view(-1)
            for i in range(flat.numel()):
                original = flat[i].item()
                with torch.no_grad():
                    flat[i] = original + h
                    plus = objective().item()
                    flat[i] = original - h
                    minus = objective().item()
                    flat[i] = original
                numeric.view(-1)[i] = (plus - minus) / (2 * h)
            torch.testing.assert_close(analytic, numeric, rtol=1e-4, atol=1e-7, msg=lambda m, name=name: f"{name}: {m}")
