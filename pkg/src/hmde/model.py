"""Hierarchical document encoder: sentence-level lower stack, document-level upper stack.

Sentences are encoded independently by the lower transformer and pooled at
their [BOS] position. The resulting sentence vectors, prefixed with a learned
document-start (DBOS) vector, are contextualised by the upper transformer;
the document embedding is the mean of the upper outputs at the sentence
positions. Queries skip the upper level entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .corpus import BOS, Document, Vocabulary, segment_document
from .tensor import Tensor
from .transformer import (
    Transformer,
    TransformerConfig,
    add_positions,
    embed_tokens,
    encode_sequence,
    pad_ids,
    pool_bos,
)


def _default_lower() -> TransformerConfig:
    return TransformerConfig(hidden_size=32, num_layers=2, num_heads=4, ff_size=64, dropout=0.1)


def _default_upper() -> TransformerConfig:
    return TransformerConfig(hidden_size=32, num_layers=2, num_heads=4, ff_size=2048, dropout=0.1)


@dataclass
class HmdeConfig:
    lower: TransformerConfig = field(default_factory=_default_lower)
    upper: TransformerConfig = field(default_factory=_default_upper)
    max_sentence_tokens: int = 128
    max_sentences: int = 32
    temperature: float = 0.1
    segmentation: str = "sentence"
    chunk_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.lower, dict):
            self.lower = TransformerConfig(**self.lower)
        if isinstance(self.upper, dict):
            self.upper = TransformerConfig(**self.upper)
        if self.lower.hidden_size != self.upper.hidden_size:
            raise ValueError(
                f"lower and upper hidden sizes differ: {self.lower.hidden_size} vs {self.upper.hidden_size}"
            )
        if self.upper.vocab_size:
            raise ValueError("the upper transformer consumes vectors; its vocab_size must be 0")
        if self.segmentation not in ("sentence", "chunk"):
            raise ValueError(f"segmentation must be 'sentence' or 'chunk', got '{self.segmentation}'")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        # DBOS occupies position 0 of the upper sequence
        if self.upper.num_layers and self.upper.max_positions < self.max_sentences + 1:
            raise ValueError("upper max_positions must cover max_sentences + 1")

    @property
    def hidden_size(self) -> int:
        return self.lower.hidden_size

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EncodedDocument:
    doc_id: str
    embedding: Tensor
    num_sentences_used: int


class HmdeModel:
    def __init__(self, config: HmdeConfig, vocab: Vocabulary):
        lower_cfg = TransformerConfig(**{**asdict(config.lower), "vocab_size": len(vocab)})
        # a private copy: the caller's config keeps its own vocab_size
        self.config = config = replace(config, lower=lower_cfg)
        self.vocab = vocab
        rng = np.random.default_rng(config.seed)
        self.lower = Transformer(lower_cfg, rng)
        self.upper = Transformer(config.upper, rng)
        self.dbos_embedding = Tensor(
            rng.normal(0.0, config.upper.init_std, config.hidden_size), requires_grad=True, name="dbos_embedding"
        )
        self.lower_frozen = False
        # separate stream so dropout draws never perturb initialisation
        self.dropout_rng = np.random.default_rng([config.seed, 1])

    @property
    def max_sentence_tokens(self) -> int:
        return self.config.max_sentence_tokens

    @property
    def max_sentences(self) -> int:
        return self.config.max_sentences

    def named_parameters(self) -> dict[str, Tensor]:
        out = {f"lower.{k}": v for k, v in self.lower.named_parameters().items()}
        out.update({f"upper.{k}": v for k, v in self.upper.named_parameters().items()})
        out["dbos_embedding"] = self.dbos_embedding
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.parameters() if p.requires_grad]

    def segments(self, doc: Document) -> list[list[int]]:
        cfg = self.config
        return segment_document(
            doc, self.vocab, cfg.segmentation, max_tokens=cfg.max_sentence_tokens, chunk_size=cfg.chunk_size
        )


def set_lower_frozen(model: HmdeModel, frozen: bool) -> None:
    """Frozen lower parameters stop requiring gradients, so nothing is recorded for them."""
    model.lower_frozen = frozen
    model.lower.set_requires_grad(not frozen)


def encode_sentence_batch(
    sentences: Sequence[Sequence[int]],
    model: HmdeModel,
    rng: np.random.Generator | None = None,
    max_tokens: int | None = None,
) -> Tensor:
    """[BOS]-pooled lower embeddings, one row per sentence.

    Sentences are head-truncated to ``max_tokens`` (default: the model's
    sentence limit, [BOS] included) and padded into one masked batch.
    """
    if len(sentences) == 0:
        raise ValueError("encode_sentence_batch needs at least one sentence")
    limit = model.max_sentence_tokens if max_tokens is None else max_tokens
    clipped = [list(s[:limit]) for s in sentences]
    for i, s in enumerate(clipped):
        if not s or s[0] != BOS:
            raise ValueError(f"sentence {i} must start with [BOS]")
    batch = pad_ids(clipped)
    x = embed_tokens(batch.inputs, model.lower, rng)
    y = encode_sequence(x, batch.mask, model.lower, rng)
    return pool_bos(y)


def encode_documents(
    docs: Sequence[Sequence[Sequence[int]]],
    model: HmdeModel,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, list[int]]:
    """Embed a batch of segmented documents; returns ([B, h], sentences used per doc).

    Documents longer than ``max_sentences`` keep their first segments. Shorter
    documents are padded and masked at the upper level, and only real sentence
    positions enter the mean.
    """
    if len(docs) == 0:
        raise ValueError("encode_documents needs at least one document")
    kept = [list(d)[: model.max_sentences] for d in docs]
    for i, d in enumerate(kept):
        if not d:
            raise ValueError(f"document {i} has no segments")
    counts = [len(d) for d in kept]
    flat = [s for d in kept for s in d]
    # chunks may carry [BOS] + chunk_size tokens; sentences were clipped at segmentation
    limit = max(model.max_sentence_tokens, max(len(s) for s in flat))
    sent = encode_sentence_batch(flat, model, rng, max_tokens=limit)

    h = model.config.hidden_size
    batch, width = len(kept), max(counts) + 1
    # scatter sentence rows into a padded [B, width, h] layout with DBOS at slot 0
    rows = np.zeros((batch, width), dtype=np.int64)
    mask = np.zeros((batch, width), dtype=bool)
    offset = 1
    for b, n in enumerate(counts):
        rows[b, 1 : n + 1] = np.arange(offset, offset + n)
        mask[b, : n + 1] = True
        offset += n
    zero_row = Tensor(np.zeros((1, h)))
    table = T.concat([T.reshape(model.dbos_embedding, (1, h)), sent, zero_row], axis=0)
    pad_index = table.shape[0] - 1
    rows = np.where(mask, rows, pad_index)
    rows[:, 0] = 0
    seq = T.embedding(table, rows)

    seq = add_positions(seq, model.upper, rng) if model.upper.layers else seq
    out = encode_sequence(seq, mask, model.upper, rng)
    sentence_mask = mask.copy()
    sentence_mask[:, 0] = False
    return T.masked_mean(out, sentence_mask), counts


def encode_document(
    segments: Sequence[Sequence[int]],
    model: HmdeModel,
    doc_id: str = "",
    rng: np.random.Generator | None = None,
) -> EncodedDocument:
    if len(segments) == 0:
        raise ValueError(f"document '{doc_id}' is empty")
    emb, counts = encode_documents([segments], model, rng)
    return EncodedDocument(doc_id=doc_id, embedding=emb[0], num_sentences_used=counts[0])


def encode_query(query: Sequence[int], model: HmdeModel) -> Tensor:
    """Lower-level [BOS] embedding of the query; the upper stack is bypassed."""
    if len(query) == 0:
        raise ValueError("query is empty")
    return encode_sentence_batch([query], model)[0]
