"""
Sentence encoders producing one vector per whitespace token.

Two families are available: the trainable ``EmbeddingEncoder`` (token
embeddings with an optional bidirectional LSTM on top) and ``AdapterEncoder``,
which wraps an external encoder registered by name. External weights are
never updated.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import torch
from pydantic import BaseModel, Field, model_validator
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from core.errors import AdapterContractError, AdapterUnavailableError, EncoderError
from core.logger import run_logger

EMBEDDING_KIND = "embedding"
EMBEDDING_INIT_RANGE = 0.1


class EncoderConfig(BaseModel):
    kind: str = EMBEDDING_KIND
    vocab_size: int = Field(default=2, ge=2)
    embed_dim: int = Field(default=128, gt=0)
    contextual: bool = False
    dropout_rate: float = Field(default=0.5, ge=0.0, lt=1.0)
    adapter_options: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_contextual_width(self) -> "EncoderConfig":
        if self.kind == EMBEDDING_KIND and self.contextual and self.embed_dim % 2:
            raise ValueError(f"contextual encoder needs an even embed_dim, got {self.embed_dim}")
        return self


@dataclass
class TokenEncoding:
    vectors: torch.Tensor
    mask: torch.Tensor

    def __post_init__(self):
        if self.vectors.dim() != 2:
            raise EncoderError(f"token encoding must be 2-D, got shape {tuple(self.vectors.shape)}")
        if self.mask.shape != (self.vectors.shape[0],):
            raise EncoderError(
                f"mask length {tuple(self.mask.shape)} does not match {self.vectors.shape[0]} rows"
            )
        if not torch.isfinite(self.vectors).all():
            raise EncoderError("token encoding contains non-finite values")

    def __len__(self) -> int:
        return self.vectors.shape[0]


def glorot_init_(module: nn.Module):
    """Xavier-uniform for dense and recurrent matrices, zeros for biases."""
    for submodule in module.modules():
        if isinstance(submodule, nn.Embedding):
            continue
        for name, parameter in submodule.named_parameters(recurse=False):
            if parameter.dim() >= 2:
                nn.init.xavier_uniform_(parameter)
            elif name.startswith("bias"):
                nn.init.zeros_(parameter)


def run_packed_lstm(lstm: nn.LSTM, inputs: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Run a batch-first LSTM over the real positions only; padding rows come back as zeros."""
    width = inputs.shape[1]
    lengths = mask.sum(dim=1).clamp(min=1).cpu()
    packed = pack_padded_sequence(inputs, lengths, batch_first=True, enforce_sorted=False)
    outputs, _ = lstm(packed)
    outputs, _ = pad_packed_sequence(outputs, batch_first=True, total_length=width)
    return outputs * mask.unsqueeze(-1).to(outputs.dtype)


class EmbeddingEncoder(nn.Module):
    """Trainable baseline: embeddings, optional bi-LSTM, dropout."""

    kind = EMBEDDING_KIND

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(config.vocab_size, config.embed_dim, padding_idx=0)
        self.lstm = (
            nn.LSTM(
                config.embed_dim,
                config.embed_dim // 2,
                batch_first=True,
                bidirectional=True,
            )
            if config.contextual
            else None
        )
        self.dropout = nn.Dropout(config.dropout_rate)
        self.reset_parameters()

    @property
    def output_dim(self) -> int:
        return self.config.embed_dim

    def reset_parameters(self):
        nn.init.uniform_(self.embedding.weight, -EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE)
        with torch.no_grad():
            self.embedding.weight[0].zero_()
        if self.lstm is not None:
            glorot_init_(self.lstm)

    def forward(
        self,
        token_ids: torch.Tensor,
        mask: torch.Tensor,
        raw_tokens: Optional[List[List[str]]] = None,
    ) -> torch.Tensor:
        if token_ids.numel() and (token_ids.min() < 0 or token_ids.max() >= self.config.vocab_size):
            raise EncoderError(
                f"token index out of range [0, {self.config.vocab_size}): "
                f"min={int(token_ids.min())}, max={int(token_ids.max())}"
            )
        vectors = self.embedding(token_ids)
        if self.lstm is not None and token_ids.shape[1] > 0:
            vectors = run_packed_lstm(self.lstm, vectors, mask)
        return self.dropout(vectors) * mask.unsqueeze(-1).to(vectors.dtype)


class EncoderAdapter(ABC):
    """External encoder contract: one row per whitespace token."""

    name: str = "adapter"

    @property
    @abstractmethod
    def output_dim(self) -> int:
        ...

    @abstractmethod
    def embed(self, raw_tokens: Sequence[str]) -> torch.Tensor:
        ...


_ADAPTERS: Dict[str, Callable[..., EncoderAdapter]] = {}


def register_adapter(name: str, factory: Optional[Callable[..., EncoderAdapter]] = None):
    """Register an adapter factory; usable as a decorator."""

    def _register(target):
        if name == EMBEDDING_KIND:
            raise EncoderError(f"adapter name {name!r} is reserved")
        _ADAPTERS[name] = target
        return target

    if factory is not None:
        return _register(factory)
    return _register


def available_adapters() -> List[str]:
    return sorted(_ADAPTERS)


def get_adapter(name: str, **options) -> EncoderAdapter:
    if name not in _ADAPTERS:
        raise AdapterUnavailableError(
            f"no encoder adapter registered as {name!r}; available: {', '.join(available_adapters())}"
        )
    return _ADAPTERS[name](**options)


@register_adapter("one-hot")
class OneHotAdapter(EncoderAdapter):
    """Test double: row j is the one-hot vector of position j."""

    name = "one-hot"

    def __init__(self, max_len: int = 64):
        self.max_len = int(max_len)

    @property
    def output_dim(self) -> int:
        return self.max_len

    def embed(self, raw_tokens: Sequence[str]) -> torch.Tensor:
        if len(raw_tokens) > self.max_len:
            raise AdapterContractError(f"one-hot adapter supports at most {self.max_len} tokens, got {len(raw_tokens)}")
        return torch.eye(self.max_len, dtype=torch.float32)[: len(raw_tokens)]


def mean_pool_subwords(
    subword_vectors: torch.Tensor,
    word_ids: Sequence[Optional[int]],
    n_words: int,
) -> torch.Tensor:
    """Average subword rows per word; ``None`` word ids (special tokens) are skipped."""
    positions = [position for position, word in enumerate(word_ids) if word is not None]
    words = [word for word in word_ids if word is not None]
    if any(word >= n_words or word < 0 for word in words):
        raise AdapterContractError(f"subword mapped to word outside [0, {n_words})")
    dim = subword_vectors.shape[-1]
    sums = subword_vectors.new_zeros((n_words, dim))
    counts = subword_vectors.new_zeros((n_words,))
    if positions:
        index = torch.tensor(words, dtype=torch.long, device=subword_vectors.device)
        sums.index_add_(0, index, subword_vectors[positions])
        counts.index_add_(0, index, torch.ones_like(index, dtype=counts.dtype))
    empty = (counts == 0).nonzero()
    if len(empty):
        raise AdapterContractError(f"word {int(empty[0])} received no subword vectors")
    return sums / counts.unsqueeze(1)


@register_adapter("hf")
class HuggingFaceAdapter(EncoderAdapter):
    """Pretrained transformers encoder with mean subword pooling (weights frozen)."""

    name = "hf"

    def __init__(self, model_name: str = "roberta-base", device: str = "cpu"):
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as e:
            raise AdapterUnavailableError(
                "the 'hf' encoder adapter needs the transformers package; install it with "
                "'pip install transformers'"
            ) from e
        self.model_name = model_name
        self.device = device
        # roberta-style tokenizers need add_prefix_space for pre-split words
        self.tokenizer = AutoTokenizer.from_pretrained(model_name, add_prefix_space=True)
        self.model = AutoModel.from_pretrained(model_name).to(device).eval()
        run_logger.info(f"Loaded transformers encoder {model_name} on {device}")

    @property
    def output_dim(self) -> int:
        return int(self.model.config.hidden_size)

    def embed(self, raw_tokens: Sequence[str]) -> torch.Tensor:
        encoded = self.tokenizer(list(raw_tokens), is_split_into_words=True, return_tensors="pt")
        word_ids = encoded.word_ids(0)
        with torch.no_grad():
            hidden = self.model(**encoded.to(self.device)).last_hidden_state[0]
        return mean_pool_subwords(hidden.cpu(), word_ids, len(raw_tokens))


def adapter_encode(raw_tokens: Sequence[str], adapter: EncoderAdapter) -> TokenEncoding:
    n_tokens = len(raw_tokens)
    if n_tokens == 0:
        return TokenEncoding(torch.zeros((0, adapter.output_dim)), torch.zeros(0, dtype=torch.bool))
    vectors = adapter.embed(raw_tokens)
    if vectors.dim() != 2 or vectors.shape[0] != n_tokens:
        rows = vectors.shape[0] if vectors.dim() >= 1 else 0
        raise AdapterContractError(f"adapter {adapter.name!r} returned {rows} rows for {n_tokens} tokens")
    return TokenEncoding(vectors, torch.ones(n_tokens, dtype=torch.bool))


class AdapterEncoder(nn.Module):
    """Batches per-sentence adapter outputs into a padded (B, n, D) tensor."""

    def __init__(self, config: EncoderConfig, adapter: EncoderAdapter):
        super().__init__()
        self.config = config
        self.kind = config.kind
        self.adapter = adapter
        self.dropout = nn.Dropout(config.dropout_rate)
        self.register_buffer("_dtype_marker", torch.zeros(0), persistent=False)

    @property
    def output_dim(self) -> int:
        return self.adapter.output_dim

    def forward(
        self,
        token_ids: torch.Tensor,
        mask: torch.Tensor,
        raw_tokens: Optional[List[List[str]]] = None,
    ) -> torch.Tensor:
        if raw_tokens is None:
            raise EncoderError(f"adapter encoder {self.kind!r} needs the raw tokens")
        width = mask.shape[1]
        dtype = self._dtype_marker.dtype
        out = torch.zeros((len(raw_tokens), width, self.output_dim), dtype=dtype, device=mask.device)
        for row, tokens in enumerate(raw_tokens):
            encoding = adapter_encode(tokens, self.adapter)
            out[row, : len(tokens)] = encoding.vectors.to(dtype=dtype, device=mask.device)
        return self.dropout(out) * mask.unsqueeze(-1).to(dtype)


def build_encoder(config: EncoderConfig) -> nn.Module:
    if config.kind == EMBEDDING_KIND:
        return EmbeddingEncoder(config)
    return AdapterEncoder(config, get_adapter(config.kind, **config.adapter_options))


def encode(token_ids: Sequence[int], encoder: nn.Module, training_mode: bool = False) -> TokenEncoding:
    """Encode one sentence given as vocabulary indices."""
    if not isinstance(encoder, EmbeddingEncoder):
        raise EncoderError("encode() works on index input; use adapter_encode() for adapters")
    ids = torch.as_tensor(list(token_ids), dtype=torch.long)
    dtype = encoder.embedding.weight.dtype
    if ids.numel() == 0:
        return TokenEncoding(torch.zeros((0, encoder.output_dim), dtype=dtype), torch.zeros(0, dtype=torch.bool))
    mask = torch.ones((1, ids.numel()), dtype=torch.bool)
    was_training = encoder.training
    encoder.train(training_mode)
    try:
        vectors = encoder(ids.unsqueeze(0), mask)[0]
    finally:
        encoder.train(was_training)
    return TokenEncoding(vectors, mask[0])
