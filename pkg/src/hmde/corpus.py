"""Wiki-style documents: JSONL I/O, tokenization, segmentation, and triple mining."""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, BOS = 0, 1, 2
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[BOS]")

_DUMP_FIELDS = ("doc_id", "lang", "concept_id", "categories", "title")


class ParseError(ValueError):
    pass


class IntegrityError(ValueError):
    pass


@dataclass
class Document:
    doc_id: str
    lang: str
    concept_id: str
    categories: list[str]
    title: str
    sentences: list[str]
    label: int | None = None

    def to_record(self, labeled: bool = False) -> dict:
        rec = {
            "doc_id": self.doc_id,
            "lang": self.lang,
            "concept_id": self.concept_id,
            "categories": list(self.categories),
            "title": self.title,
            "sentences": list(self.sentences),
        }
        if labeled:
            if self.label is None:
                raise ValueError(f"document '{self.doc_id}' has no label")
            rec["label"] = self.label
        return rec


@dataclass(frozen=True)
class TrainingTriple:
    anchor_id: str
    positive_id: str
    negative_id: str


# -- dump I/O ------------------------------------------------------------------


def _parse_record(line: str, lineno: int, labeled: bool) -> Document:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise ParseError(f"line {lineno}: expected a JSON object")
    for name in _DUMP_FIELDS:
        if name not in rec:
            raise ParseError(f"line {lineno}: missing field '{name}'")
    has_sentences, has_text = "sentences" in rec, "text" in rec
    if has_sentences == has_text:
        raise ParseError(f"line {lineno}: need exactly one of 'sentences' or 'text'")
    allowed = set(_DUMP_FIELDS) | {"sentences", "text"} | ({"label"} if labeled else set())
    unknown = sorted(set(rec) - allowed)
    if unknown:
        raise ParseError(f"line {lineno}: unknown field '{unknown[0]}'")
    for name in ("doc_id", "lang", "concept_id", "title"):
        if not isinstance(rec[name], str):
            raise ParseError(f"line {lineno}: field '{name}' must be a string")
    if not rec["lang"] or not rec["doc_id"]:
        raise ParseError(f"line {lineno}: field 'doc_id' and 'lang' must be non-empty")
    if not isinstance(rec["categories"], list) or not all(isinstance(c, str) for c in rec["categories"]):
        raise ParseError(f"line {lineno}: field 'categories' must be an array of strings")
    if has_sentences:
        sents = rec["sentences"]
        if not isinstance(sents, list) or not all(isinstance(s, str) for s in sents):
            raise ParseError(f"line {lineno}: field 'sentences' must be an array of strings")
        sents = [s.strip() for s in sents if s.strip()]
    else:
        if not isinstance(rec["text"], str):
            raise ParseError(f"line {lineno}: field 'text' must be a string")
        sents = split_sentences(rec["text"])
    if not sents:
        raise ParseError(f"line {lineno}: document '{rec['doc_id']}' has no sentences")
    label = None
    if labeled:
        if "label" not in rec:
            raise ParseError(f"line {lineno}: missing field 'label'")
        label = rec["label"]
        if not isinstance(label, int) or isinstance(label, bool):
            raise ParseError(f"line {lineno}: field 'label' must be an integer")
    return Document(
        doc_id=rec["doc_id"],
        lang=rec["lang"],
        concept_id=rec["concept_id"],
        categories=list(rec["categories"]),
        title=rec["title"],
        sentences=sents,
        label=label,
    )


def load_dump(path: str | Path, labeled: bool = False) -> list[Document]:
    """Read one JSON document per line; duplicate ``doc_id`` raises IntegrityError."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            doc = _parse_record(line, lineno, labeled)
            if doc.doc_id in seen:
                raise IntegrityError(f"line {lineno}: duplicate doc_id '{doc.doc_id}'")
            seen.add(doc.doc_id)
            docs.append(doc)
    return docs


def write_dump(docs: Iterable[Document], path: str | Path, labeled: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(labeled), ensure_ascii=False) + "\n")


def write_triples(triples: Iterable[TrainingTriple], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triples:
            rec = {"anchor_id": t.anchor_id, "positive_id": t.positive_id, "negative_id": t.negative_id}
            fh.write(json.dumps(rec) + "\n")


def load_triples(path: str | Path) -> list[TrainingTriple]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(TrainingTriple(rec["anchor_id"], rec["positive_id"], rec["negative_id"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"line {lineno}: bad triple record ({exc})") from None
    return out


# -- text processing ---------------------------------------------------------

_BOUNDARY = re.compile(r"(?<=[.!?])\s+|\n")


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _BOUNDARY.split(text) if s.strip()]


def chunk_tokens(tokens: Sequence[int], chunk_size: int = 128) -> list[list[int]]:
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    return [list(tokens[i : i + chunk_size]) for i in range(0, len(tokens), chunk_size)]


class Vocabulary:
    """Word-level vocabulary; ids 0-2 are [PAD], [UNK], [BOS]."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(RESERVED_TOKENS) + [t for t in tokens]
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self.index.get(token, UNK)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if tuple(lines[:3]) != RESERVED_TOKENS:
            raise ParseError(f"{path}: vocabulary must start with {', '.join(RESERVED_TOKENS)}")
        return cls(lines[3:])


def words(sentence: str) -> list[str]:
    return sentence.lower().split()


def build_vocab(docs: Sequence[Document], min_frequency: int = 1) -> Vocabulary:
    """Words with count >= ``min_frequency``; ids by descending count, then lexicographically."""
    if not docs:
        raise ValueError("build_vocab needs at least one document")
    counts: Counter[str] = Counter()
    for doc in docs:
        for sent in doc.sentences:
            counts.update(words(sent))
    kept = [(w, c) for w, c in counts.items() if c >= min_frequency and w not in RESERVED_TOKENS]
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    return Vocabulary([w for w, _ in kept])


def tokenize(sentence: str, vocab: Vocabulary) -> list[int]:
    return [BOS] + [vocab.id(w) for w in words(sentence)]


def segment_document(
    doc: Document,
    vocab: Vocabulary,
    mode: str = "sentence",
    max_tokens: int = 128,
    chunk_size: int = 128,
) -> list[list[int]]:
    """Split a document into [BOS]-prefixed id lists.

    ``sentence``: one segment per sentence, head-truncated to ``max_tokens``
    (including [BOS]). ``chunk``: the word stream cut into consecutive
    ``chunk_size`` chunks, each prefixed with [BOS].
    """
    if mode == "sentence":
        return [tokenize(s, vocab)[:max_tokens] for s in doc.sentences]
    if mode == "chunk":
        stream = document_token_stream(doc, vocab)
        return [[BOS] + c for c in chunk_tokens(stream, chunk_size)] or [[BOS]]
    raise ValueError(f"unknown segmentation mode '{mode}' (expected 'sentence' or 'chunk')")


def document_token_stream(doc: Document, vocab: Vocabulary) -> list[int]:
    """All word ids of the document, sentence boundaries ignored, no [BOS]."""
    return [vocab.id(w) for s in doc.sentences for w in words(s)]


# -- triple mining ---------------------------------------------------------


@dataclass
class MiningStats:
    concepts_total: int = 0
    concepts_kept: int = 0
    pairs_total: int = 0
    pairs_dropped_no_negative: int = 0
    triples: int = 0
    candidates: dict[tuple[str, str], tuple[str, ...]] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "concepts_total": self.concepts_total,
            "concepts_kept": self.concepts_kept,
            "pairs_total": self.pairs_total,
            "pairs_dropped_no_negative": self.pairs_dropped_no_negative,
            "triples": self.triples,
        }


def mine_triples_with_stats(
    docs: Sequence[Document],
    languages: Sequence[str],
    rng_seed: int,
    keep_candidates: bool = False,
) -> tuple[list[TrainingTriple], MiningStats]:
    """Mine (anchor, cross-lingual positive, same-language category negative) triples.

    Every ordered cross-lingual pair of pages of a concept becomes a candidate;
    the negative is sampled uniformly from pages in the anchor's language that
    share at least one category with the anchor but belong to another concept.
    Pairs without any such page are dropped.
    """
    langs = set(languages)
    pool = [d for d in docs if d.lang in langs]
    by_concept: dict[str, dict[str, Document]] = defaultdict(dict)
    for d in pool:
        pages = by_concept[d.concept_id]
        if d.lang in pages:
            raise IntegrityError(
                f"concept '{d.concept_id}' has two pages in language '{d.lang}': "
                f"'{pages[d.lang].doc_id}' and '{d.doc_id}'"
            )
        pages[d.lang] = d

    by_lang_cat: dict[tuple[str, str], set[str]] = defaultdict(set)
    concept_of = {}
    for d in pool:
        concept_of[d.doc_id] = d.concept_id
        for c in d.categories:
            by_lang_cat[(d.lang, c)].add(d.doc_id)

    stats = MiningStats(concepts_total=len(by_concept))
    rng = np.random.default_rng(rng_seed)
    triples: list[TrainingTriple] = []
    for concept in sorted(by_concept):
        pages = by_concept[concept]
        if len(pages) < 2:
            continue
        stats.concepts_kept += 1
        for anchor_lang in sorted(pages):
            anchor = pages[anchor_lang]
            shared: set[str] = set()
            for c in anchor.categories:
                shared |= by_lang_cat[(anchor_lang, c)]
            candidates = tuple(sorted(i for i in shared if concept_of[i] != concept))
            for pos_lang in sorted(pages):
                if pos_lang == anchor_lang:
                    continue
                positive = pages[pos_lang]
                stats.pairs_total += 1
                if keep_candidates:
                    stats.candidates[(anchor.doc_id, positive.doc_id)] = candidates
                if not candidates:
                    stats.pairs_dropped_no_negative += 1
                    continue
                negative = candidates[int(rng.integers(len(candidates)))]
                triples.append(TrainingTriple(anchor.doc_id, positive.doc_id, negative))
    stats.triples = len(triples)
    return triples, stats


def mine_triples(docs: Sequence[Document], languages: Sequence[str], rng_seed: int) -> list[TrainingTriple]:
    return mine_triples_with_stats(docs, languages, rng_seed)[0]


def downsample_triples(
    triples: Sequence[TrainingTriple], target_count: int, rng_seed: int
) -> list[TrainingTriple]:
    """Uniform sample without replacement, returned in original order."""
    if not 0 <= target_count <= len(triples):
        raise ValueError(f"target_count must lie in [0, {len(triples)}], got {target_count}")
    rng = np.random.default_rng(rng_seed)
    keep = np.sort(rng.choice(len(triples), size=target_count, replace=False))
    return [triples[i] for i in keep]
