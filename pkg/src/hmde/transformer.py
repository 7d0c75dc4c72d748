"""Pre-norm transformer encoder stacks shared by the sentence and document levels."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


class VocabularyError(ValueError):
    pass


class LengthError(ValueError):
    pass


@dataclass
class TransformerConfig:
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ff_size: int = 2048
    dropout: float = 0.1
    max_positions: int = 130
    layer_norm_eps: float = 1e-12
    vocab_size: int = 0  # 0: consumes vectors, not token ids
    init_std: float = 0.02

    def __post_init__(self):
        if self.hidden_size % self.num_heads:
            raise ValueError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.num_layers < 0 or self.max_positions < 1:
            raise ValueError("num_layers must be >= 0 and max_positions >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PaddedBatch:
    """``inputs`` is [B, T, h] (or int ids [B, T]); ``mask`` is true at real positions."""

    inputs: Tensor | np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2 or not self.mask.any(axis=1).all():
            raise ValueError("every row of a padded batch needs at least one real position")


def pad_ids(sequences: Sequence[Sequence[int]], pad_id: int = 0) -> PaddedBatch:
    width = max(len(s) for s in sequences)
    ids = np.full((len(sequences), width), pad_id, dtype=np.int64)
    mask = np.zeros((len(sequences), width), dtype=bool)
    for i, seq in enumerate(sequences):
        ids[i, : len(seq)] = seq
        mask[i, : len(seq)] = True
    return PaddedBatch(ids, mask)


@dataclass
class EncoderLayer:
    ln1_gamma: Tensor
    ln1_beta: Tensor
    w_qkv: Tensor
    b_qkv: Tensor
    w_out: Tensor
    b_out: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    w_ff1: Tensor
    b_ff1: Tensor
    w_ff2: Tensor
    b_ff2: Tensor

    @classmethod
    def init(cls, cfg: TransformerConfig, rng: np.random.Generator) -> "EncoderLayer":
        h, f, std = cfg.hidden_size, cfg.ff_size, cfg.init_std
        return cls(
            ln1_gamma=Tensor(np.ones(h)),
            ln1_beta=Tensor(np.zeros(h)),
            w_qkv=Tensor(rng.normal(0.0, std, (h, 3 * h))),
            b_qkv=Tensor(np.zeros(3 * h)),
            w_out=Tensor(rng.normal(0.0, std, (h, h))),
            b_out=Tensor(np.zeros(h)),
            ln2_gamma=Tensor(np.ones(h)),
            ln2_beta=Tensor(np.zeros(h)),
            w_ff1=Tensor(rng.normal(0.0, std, (h, f))),
            b_ff1=Tensor(np.zeros(f)),
            w_ff2=Tensor(rng.normal(0.0, std, (f, h))),
            b_ff2=Tensor(np.zeros(h)),
        )

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": v for k, v in vars(self).items()}


class Transformer:
    """Embedding tables (optional) plus a stack of encoder layers.

    When ``vocab_size`` is 0 there is no token table; the stack consumes
    vectors and positions are added only if the stack is non-empty.
    """

    def __init__(self, config: TransformerConfig, rng: np.random.Generator):
        self.config = config
        std = config.init_std
        h = config.hidden_size
        self.token_embedding = (
            Tensor(rng.normal(0.0, std, (config.vocab_size, h))) if config.vocab_size else None
        )
        self.position_embedding = (
            Tensor(rng.normal(0.0, std, (config.max_positions, h)))
            if config.vocab_size or config.num_layers
            else None
        )
        self.layers = [EncoderLayer.init(config, rng) for _ in range(config.num_layers)]
        for name, p in self.named_parameters().items():
            p.name = name
            p.requires_grad = True

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.token_embedding is not None:
            out["token_embedding"] = self.token_embedding
        if self.position_embedding is not None:
            out["position_embedding"] = self.position_embedding
        for i, layer in enumerate(self.layers):
            out.update(layer.named_parameters(f"layers.{i}"))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag
            if not flag:
                p.grad = None


def embed_tokens(
    ids: np.ndarray, model: Transformer, rng: np.random.Generator | None = None
) -> Tensor:
    """Token plus learned positional embedding, then dropout when ``rng`` is given."""
    ids = np.asarray(ids, dtype=np.int64)
    cfg = model.config
    if model.token_embedding is None:
        raise VocabularyError("this transformer has no token vocabulary")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise VocabularyError(f"token id out of range [0, {cfg.vocab_size}): {int(ids.max())}")
    length = ids.shape[-1]
    if length > cfg.max_positions:
        raise LengthError(f"sequence length {length} exceeds max_positions {cfg.max_positions}")
    x = T.embedding(model.token_embedding, ids) + model.position_embedding[:length]
    return T.dropout(x, cfg.dropout, rng, training=rng is not None)


def add_positions(x: Tensor, model: Transformer, rng: np.random.Generator | None = None) -> Tensor:
    """Add positional embeddings to a vector sequence [B, T, h] (upper-level input stage)."""
    cfg = model.config
    if model.position_embedding is None:
        return x
    length = x.shape[1]
    if length > cfg.max_positions:
        raise LengthError(f"sequence length {length} exceeds max_positions {cfg.max_positions}")
    x = x + model.position_embedding[:length]
    return T.dropout(x, cfg.dropout, rng, training=rng is not None)


def attention_weights(
    x: Tensor, mask: np.ndarray, layer: EncoderLayer, num_heads: int
) -> tuple[Tensor, Tensor]:
    """Per-head attention probabilities [B, H, T, T] and values [B, H, T, d]."""
    batch, length, h = x.shape
    d = h // num_heads
    qkv = x @ layer.w_qkv + layer.b_qkv
    qkv = qkv.reshape(batch, length, 3, num_heads, d).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(d))
    bias = np.where(np.asarray(mask, dtype=bool), 0.0, -np.inf).astype(np.float32)
    scores = scores + bias[:, None, None, :]
    return T.softmax(scores, axis=-1), v


def multi_head_attention(
    x: Tensor, mask: np.ndarray, layer: EncoderLayer, num_heads: int
) -> Tensor:
    batch, length, h = x.shape
    probs, v = attention_weights(x, mask, layer, num_heads)
    ctx = (probs @ v).transpose(0, 2, 1, 3).reshape(batch, length, h)
    return ctx @ layer.w_out + layer.b_out


def encoder_layer(
    x: Tensor,
    mask: np.ndarray,
    layer: EncoderLayer,
    cfg: TransformerConfig,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """x + Attn(LN(x)), then x + FF(LN(x)); dropout on both sublayer outputs."""
    training = rng is not None
    eps = cfg.layer_norm_eps
    a = multi_head_attention(T.layer_norm(x, layer.ln1_gamma, layer.ln1_beta, eps), mask, layer, cfg.num_heads)
    x = x + T.dropout(a, cfg.dropout, rng, training)
    hidden = T.gelu(T.layer_norm(x, layer.ln2_gamma, layer.ln2_beta, eps) @ layer.w_ff1 + layer.b_ff1)
    f = hidden @ layer.w_ff2 + layer.b_ff2
    return x + T.dropout(f, cfg.dropout, rng, training)


def encode_sequence(
    x: Tensor, mask: np.ndarray, model: Transformer, rng: np.random.Generator | None = None
) -> Tensor:
    for layer in model.layers:
        x = encoder_layer(x, mask, layer, model.config, rng)
    return x


def pool_bos(y: Tensor) -> Tensor:
    if y.ndim != 3 or y.shape[1] == 0:
        raise LengthError(f"pool_bos needs [B, T>0, h], got {y.shape}")
    return y[:, 0, :]
