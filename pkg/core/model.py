"""
Encoder + pointer decoder bundled with the vocabulary and label space.
"""
from typing import Any, Dict, List, Sequence

import torch
from pydantic import BaseModel, Field
from torch import nn

from core.corpus import Batch, IntentSpanTriplet, Vocab, tokenize, tokens_batch
from core.decoder import DecoderConfig, ModelOutput, PointerDecoder, TupleFeed, decode_greedy
from core.encoder import EMBEDDING_KIND, EncoderConfig, build_encoder
from core.errors import DecoderError
from core.taxonomy import Taxonomy


class ModelConfig(BaseModel):
    """Model shape as exposed by the command line and run config files."""

    encoder: str = EMBEDDING_KIND
    embed_dim: int = Field(default=128, gt=0)
    contextual: bool = True
    hidden_dim: int = Field(default=128, gt=0)
    pointer_hidden: int = Field(default=128, gt=0)
    n_slots: int = Field(default=2, ge=1)
    n_steps: int = Field(default=1, ge=1)
    tuple_feed: TupleFeed = "accumulated"
    adapter_options: Dict[str, Any] = Field(default_factory=dict)


class IntentModel(nn.Module):
    def __init__(self, config: ModelConfig, vocab: Vocab, taxonomy: Taxonomy, dropout_rate: float = 0.5):
        super().__init__()
        self.config = config
        self.vocab = vocab
        self.taxonomy = taxonomy
        self.encoder_config = EncoderConfig(
            kind=config.encoder,
            vocab_size=len(vocab),
            embed_dim=config.embed_dim,
            contextual=config.contextual,
            dropout_rate=dropout_rate,
            adapter_options=config.adapter_options,
        )
        self.encoder = build_encoder(self.encoder_config)
        n_coarse, n_fine = taxonomy.sizes
        self.decoder_config = DecoderConfig(
            encoder_dim=self.encoder.output_dim,
            hidden_dim=config.hidden_dim,
            pointer_hidden=config.pointer_hidden,
            n_slots=config.n_slots,
            n_steps=config.n_steps,
            coarse_label_count=n_coarse,
            fine_label_count=n_fine,
            dropout_rate=dropout_rate,
            tuple_feed=config.tuple_feed,
        )
        self.decoder = PointerDecoder(self.decoder_config)

    @property
    def device(self) -> torch.device:
        return next(self.decoder.parameters()).device

    @property
    def n_slots(self) -> int:
        return self.config.n_slots

    def forward(self, batch: Batch, teacher_forcing: bool = False, decode: bool = True) -> ModelOutput:
        batch = batch.to(self.device)
        vectors = self.encoder(batch.token_ids, batch.mask, batch.tokens)
        if teacher_forcing:
            if not batch.has_gold:
                raise DecoderError("teacher forcing needs gold span positions")
            output = self.decoder(vectors, batch.mask, batch.gold_start, batch.gold_end)
        else:
            output = self.decoder(vectors, batch.mask)
        if decode:
            output.decoded_steps = [decode_greedy(step, batch.mask, self.taxonomy) for step in output.steps]
        return output

    def predict(self, token_lists: Sequence[Sequence[str]], batch_size: int = 32) -> List[List[IntentSpanTriplet]]:
        """Greedy triplets for already tokenized sentences, in input order."""
        if any(len(tokens) == 0 for tokens in token_lists):
            raise DecoderError("cannot predict intents for an empty sentence")
        was_training = self.training
        self.eval()
        predictions: List[List[IntentSpanTriplet]] = []
        try:
            with torch.no_grad():
                for offset in range(0, len(token_lists), batch_size):
                    chunk = token_lists[offset : offset + batch_size]
                    predictions.extend(self(tokens_batch(chunk, self.vocab)).decoded)
        finally:
            self.train(was_training)
        return predictions

    def predict_text(self, texts: Sequence[str], batch_size: int = 32) -> List[List[IntentSpanTriplet]]:
        return self.predict([tokenize(text) for text in texts], batch_size)
