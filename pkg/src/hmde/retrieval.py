"""Cosine-ranked cross-lingual retrieval, segment baselines, and MAP."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import BOS, Document, ParseError, document_token_stream, tokenize
from .model import HmdeModel, encode_document, encode_query, encode_sentence_batch
from .tensor import DegenerateVectorError, no_grad

ENCODERS = ("hmde", "sliding", "truncated")

Qrels = dict[str, dict[str, int]]
RetrievalRun = dict[str, list[tuple[str, float]]]


@dataclass
class DocumentIndex:
    doc_ids: list[str]
    embeddings: np.ndarray  # [D, h] float32
    encoder_tag: str

    def __post_init__(self):
        if len(self.doc_ids) != self.embeddings.shape[0]:
            raise ValueError(f"{len(self.doc_ids)} ids for {self.embeddings.shape[0]} embeddings")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError("document ids in an index must be unique")
        if not np.isfinite(self.embeddings).all():
            raise ValueError("index embeddings must be finite")


@dataclass
class Query:
    query_id: str
    lang: str
    text: str


def _require_docs(docs: Sequence[Document]) -> None:
    if len(docs) == 0:
        raise ValueError("cannot encode an empty collection")


def encode_collection(docs: Sequence[Document], model: HmdeModel) -> DocumentIndex:
    """One hierarchical embedding per document, in input order (evaluation mode)."""
    _require_docs(docs)
    rows = []
    with no_grad():
        for doc in docs:
            rows.append(encode_document(model.segments(doc), model, doc.doc_id).embedding.data)
    return DocumentIndex([d.doc_id for d in docs], np.stack(rows), "hmde")


def sliding_windows(num_tokens: int, segment_len: int = 128) -> list[tuple[int, int]]:
    """Half-open windows of ``segment_len`` overlapping by floor(segment_len / 3).

    Generation stops at the first window that reaches the end of the stream,
    so the last window may be short.
    """
    if segment_len < 3:
        raise ValueError(f"segment length must be >= 3, got {segment_len}")
    if num_tokens <= 0:
        raise ValueError("cannot window an empty token stream")
    stride = segment_len - segment_len // 3
    windows = []
    start = 0
    while True:
        end = min(start + segment_len, num_tokens)
        windows.append((start, end))
        if end >= num_tokens:
            return windows
        start += stride


def embed_sliding(doc: Document, model: HmdeModel, segment_len: int = 128) -> np.ndarray:
    stream = document_token_stream(doc, model.vocab)
    if not stream:
        raise ValueError(f"document '{doc.doc_id}' has no tokens")
    segments = [[BOS] + stream[a:b] for a, b in sliding_windows(len(stream), segment_len)]
    with no_grad():
        emb = encode_sentence_batch(segments, model, max_tokens=segment_len + 1).data
    return emb.astype(np.float64).mean(axis=0).astype(np.float32)


def encode_collection_sliding(
    docs: Sequence[Document], model: HmdeModel, segment_len: int = 128
) -> DocumentIndex:
    """Mean of lower-encoder window embeddings over each flattened document."""
    _require_docs(docs)
    rows = [embed_sliding(d, model, segment_len) for d in docs]
    return DocumentIndex([d.doc_id for d in docs], np.stack(rows), "sliding")


def embed_truncated(doc: Document, model: HmdeModel, limit: int = 128) -> np.ndarray:
    stream = document_token_stream(doc, model.vocab)
    if not stream:
        raise ValueError(f"document '{doc.doc_id}' has no tokens")
    with no_grad():
        return encode_sentence_batch([[BOS] + stream[: limit - 1]], model, max_tokens=limit).data[0]


def encode_collection_truncated(
    docs: Sequence[Document], model: HmdeModel, limit: int = 128
) -> DocumentIndex:
    """Lower-encoder embedding of the first ``limit`` positions ([BOS] included)."""
    _require_docs(docs)
    rows = [embed_truncated(d, model, limit) for d in docs]
    return DocumentIndex([d.doc_id for d in docs], np.stack(rows), "truncated")


def build_index(docs: Sequence[Document], model: HmdeModel, encoder: str, segment_len: int = 128) -> DocumentIndex:
    if encoder == "hmde":
        return encode_collection(docs, model)
    if encoder == "sliding":
        return encode_collection_sliding(docs, model, segment_len)
    if encoder == "truncated":
        return encode_collection_truncated(docs, model, segment_len)
    raise ValueError(f"unknown encoder '{encoder}' (expected one of {', '.join(ENCODERS)})")


def embed_query_text(text: str, model: HmdeModel) -> np.ndarray:
    with no_grad():
        return encode_query(tokenize(text, model.vocab), model).data


def rank_documents(
    query_embedding, index: DocumentIndex, top_k: int | None = None
) -> list[tuple[str, float]]:
    """Documents by descending cosine to the query; ties go to the smaller doc_id."""
    if top_k is not None and top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    q = np.asarray(getattr(query_embedding, "data", query_embedding), dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise DegenerateVectorError("query embedding has zero norm")
    emb = index.embeddings.astype(np.float64)
    norms = np.linalg.norm(emb, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(norms > 0, emb @ q / (norms * qn), 0.0)
    ids = np.array(index.doc_ids, dtype=object)
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    if top_k is not None:
        order = order[:top_k]
    return [(index.doc_ids[i], float(scores[i])) for i in order]


def average_precision(ranked: Sequence[str], relevant: Iterable[str]) -> float:
    relevant = set(relevant)
    if not relevant:
        raise ValueError("average precision is undefined without relevant documents")
    hits, total = 0, 0.0
    for rank, doc_id in enumerate(ranked, start=1):
        if doc_id in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def mean_average_precision(run: RetrievalRun, qrels: Qrels) -> float:
    """Unweighted mean AP over queries with at least one relevant document."""
    aps = []
    for qid in qrels:
        relevant = {d for d, grade in qrels[qid].items() if grade > 0}
        if not relevant:
            continue
        ranked = [d for d, _ in run.get(qid, [])]
        aps.append(average_precision(ranked, relevant))
    if not aps:
        raise ValueError("no query has a relevant document")
    return float(np.mean(aps))


def retrieve(
    queries: Sequence[Query], index: DocumentIndex, model: HmdeModel, top_k: int | None = None
) -> RetrievalRun:
    return {q.query_id: rank_documents(embed_query_text(q.text, model), index, top_k) for q in queries}


# -- TREC-style files --------------------------------------------------------------


def write_run(run: RetrievalRun, path: str | Path, tag: str = "hmde") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid, ranked in run.items():
            for rank, (doc_id, score) in enumerate(ranked, start=1):
                fh.write(f"{qid} Q0 {doc_id} {rank} {score:.4f} {tag}\n")


def load_run(path: str | Path) -> RetrievalRun:
    run: RetrievalRun = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6 or parts[1] != "Q0":
                raise ParseError(f"line {lineno}: expected '<qid> Q0 <doc> <rank> <score> <tag>'")
            try:
                score = float(parts[4])
                int(parts[3])
            except ValueError:
                raise ParseError(f"line {lineno}: rank/score not numeric") from None
            run.setdefault(parts[0], []).append((parts[2], score))
    return run


def write_qrels(qrels: Qrels, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid, judged in qrels.items():
            for doc_id, grade in judged.items():
                fh.write(f"{qid} 0 {doc_id} {grade}\n")


def load_qrels(path: str | Path) -> Qrels:
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: expected '<qid> 0 <doc> <grade>'")
            try:
                grade = int(parts[3])
            except ValueError:
                raise ParseError(f"line {lineno}: grade '{parts[3]}' is not an integer") from None
            qrels.setdefault(parts[0], {})[parts[2]] = grade
    return qrels


def write_queries(queries: Iterable[Query], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps({"query_id": q.query_id, "lang": q.lang, "text": q.text}, ensure_ascii=False) + "\n")


def load_queries(path: str | Path) -> list[Query]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(Query(str(rec["query_id"]), str(rec["lang"]), str(rec["text"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"line {lineno}: bad query record ({exc})") from None
    return out
