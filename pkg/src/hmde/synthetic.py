"""Deterministic synthetic comparable corpora in made-up languages.

A latent word inventory is rendered into each language with its own
surface forms, except for a fraction of "entity" words that are spelled
identically everywhere. Categories and concepts are topic distributions
over latent words; pages of one concept in different languages draw
independent sentences from the same topic, so they are comparable but not
parallel. Concepts in the same category share the category's topic words.
Each concept also has a two-word name, drawn from the entity words when
there are any; it is the page title, opens the lead sentence, and recurs
in later sentences.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np

from .corpus import Document
from .retrieval import Query

_CONSONANTS = "bcdfghjklmnprstvwxz"
_VOWELS = "aeiouy"


@dataclass
class CorpusSpec:
    languages: list[str] = field(default_factory=lambda: ["xa", "xb"])
    num_concepts: int = 120
    # inclusive range of how many languages a concept has pages in
    pages_per_concept: tuple[int, int] = (2, 2)
    num_categories: int = 8
    num_classes: int = 4
    sentences_per_doc: tuple[int, int] = (6, 12)
    words_per_sentence: tuple[int, int] = (6, 12)
    shared_vocab_fraction: float = 0.2
    latent_vocab_size: int = 400
    function_words: int = 20
    concept_words: int = 10
    category_words: int = 30
    second_category_prob: float = 0.3
    name_mention_prob: float = 0.3
    # word mixture: language function words / concept topic / category topic
    mixture: tuple[float, float, float] = (0.2, 0.5, 0.3)
    seed: int = 0

    def __post_init__(self):
        self.languages = list(self.languages)
        self.pages_per_concept = tuple(self.pages_per_concept)
        self.sentences_per_doc = tuple(self.sentences_per_doc)
        self.words_per_sentence = tuple(self.words_per_sentence)
        self.mixture = tuple(self.mixture)
        self.validate()

    def validate(self) -> None:
        if len(self.languages) < 2 or len(set(self.languages)) != len(self.languages):
            raise ValueError("need at least two distinct languages")
        if not 0.0 <= self.shared_vocab_fraction <= 1.0:
            raise ValueError(f"shared_vocab_fraction must lie in [0, 1], got {self.shared_vocab_fraction}")
        lo, hi = self.pages_per_concept
        if not 1 <= lo <= hi <= len(self.languages):
            raise ValueError(f"pages_per_concept {self.pages_per_concept} invalid for {len(self.languages)} languages")
        for name in ("sentences_per_doc", "words_per_sentence"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValueError(f"{name} must be a range with 1 <= min <= max")
        if self.num_concepts < 1 or self.num_categories < 1:
            raise ValueError("num_concepts and num_categories must be positive")
        if not 1 <= self.num_classes <= self.num_categories:
            raise ValueError("num_classes must lie in [1, num_categories]")
        if self.concept_words > self.latent_vocab_size or self.category_words > self.latent_vocab_size:
            raise ValueError("topic sizes cannot exceed latent_vocab_size")
        if not 0.0 <= self.name_mention_prob <= 1.0:
            raise ValueError("name_mention_prob must lie in [0, 1]")
        if len(self.mixture) != 3 or min(self.mixture) < 0 or abs(sum(self.mixture) - 1.0) > 1e-9:
            raise ValueError("mixture must be three non-negative weights summing to 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def class_of_category(self, category: int) -> int:
        return category * self.num_classes // self.num_categories


class _WordForge:
    """Hands out pseudo-words that are unique across every language."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.taken: set[str] = set()

    def syllables(self, count: int) -> list[str]:
        pairs = [c + v for c in _CONSONANTS for v in _VOWELS]
        picked = self.rng.choice(len(pairs), size=count, replace=False)
        return [pairs[i] for i in picked]

    def word(self, syllables: list[str]) -> str:
        while True:
            n = int(self.rng.integers(2, 4))
            w = "".join(syllables[int(i)] for i in self.rng.integers(len(syllables), size=n))
            if w not in self.taken:
                self.taken.add(w)
                return w


def language_lexicons(spec: CorpusSpec, rng: np.random.Generator) -> tuple[dict, dict]:
    """Surface forms per language for latent words and for function words."""
    forge = _WordForge(rng)
    n_shared = int(round(spec.shared_vocab_fraction * spec.latent_vocab_size))
    entity_syllables = forge.syllables(24)
    entities = [forge.word(entity_syllables) for _ in range(n_shared)]
    lexicon: dict[str, list[str]] = {}
    function: dict[str, list[str]] = {}
    for lang in spec.languages:
        syl = forge.syllables(24)
        own = [forge.word(syl) for _ in range(spec.latent_vocab_size - n_shared)]
        lexicon[lang] = entities + own
        function[lang] = [forge.word(syl) for _ in range(spec.function_words)]
    return lexicon, function


def generate_synthetic_corpus(spec: CorpusSpec) -> list[Document]:
    """Documents carry ``label`` = class of the concept's primary category."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    lexicon, function = language_lexicons(spec, rng)
    V = spec.latent_vocab_size
    n_shared = int(round(spec.shared_vocab_fraction * V))
    name_pool = n_shared if n_shared >= 2 else V

    category_topics = [rng.choice(V, size=spec.category_words, replace=False) for _ in range(spec.num_categories)]
    docs: list[Document] = []
    width = len(str(spec.num_concepts - 1))
    for ci in range(spec.num_concepts):
        concept_id = f"Q{ci:0{width}d}"
        primary = int(rng.integers(spec.num_categories))
        cats = [primary]
        if spec.num_categories > 1 and rng.random() < spec.second_category_prob:
            other = int(rng.integers(spec.num_categories - 1))
            cats.append(other + (other >= primary))
        topic = rng.choice(V, size=spec.concept_words, replace=False)
        name = rng.choice(name_pool, size=2, replace=False)
        cat_pool = np.concatenate([category_topics[c] for c in cats])

        lo, hi = spec.pages_per_concept
        n_pages = int(rng.integers(lo, hi + 1))
        langs = sorted(rng.choice(spec.languages, size=n_pages, replace=False).tolist(), key=spec.languages.index)
        for lang in langs:
            lex, fn = lexicon[lang], function[lang]
            n_sent = int(rng.integers(spec.sentences_per_doc[0], spec.sentences_per_doc[1] + 1))
            sentences = []
            rendered_name = [lex[int(w)] for w in name]
            for s in range(n_sent):
                n_words = int(rng.integers(spec.words_per_sentence[0], spec.words_per_sentence[1] + 1))
                kinds = rng.choice(3, size=n_words, p=spec.mixture)
                mention = s == 0 or rng.random() < spec.name_mention_prob
                toks = list(rendered_name) if mention else []
                for kind in kinds:
                    if kind == 0:
                        toks.append(fn[int(rng.integers(len(fn)))])
                    elif kind == 1:
                        toks.append(lex[int(topic[int(rng.integers(len(topic)))])])
                    else:
                        toks.append(lex[int(cat_pool[int(rng.integers(len(cat_pool)))])])
                # sentences are stored pre-split, so no terminator is needed
                sentences.append(" ".join(toks))
            docs.append(
                Document(
                    doc_id=f"{lang}-{concept_id}",
                    lang=lang,
                    concept_id=concept_id,
                    categories=[f"cat{c}" for c in cats],
                    title=" ".join(rendered_name),
                    sentences=sentences,
                    label=spec.class_of_category(primary),
                )
            )
    return docs


# -- evaluation tasks carved out of a generated corpus --------------------------------


@dataclass
class RetrievalTask:
    queries: list[Query]
    qrels: dict[str, dict[str, int]]
    collection: list[Document]


def split_heldout(docs: list[Document], num_heldout: int) -> tuple[list[Document], list[Document]]:
    """(training docs, held-out docs); the last ``num_heldout`` concepts by id are held out."""
    concepts = sorted({d.concept_id for d in docs})
    if not 0 <= num_heldout <= len(concepts):
        raise ValueError(f"cannot hold out {num_heldout} of {len(concepts)} concepts")
    held = set(concepts[len(concepts) - num_heldout :])
    return [d for d in docs if d.concept_id not in held], [d for d in docs if d.concept_id in held]


def retrieval_task(docs: list[Document], query_lang: str, doc_lang: str) -> RetrievalTask:
    """Query = lead sentence of each query-language page; its only relevant document is
    the same concept's page in the collection language."""
    collection = [d for d in docs if d.lang == doc_lang]
    target = {d.concept_id: d.doc_id for d in collection}
    queries, qrels = [], {}
    for d in docs:
        if d.lang == query_lang and d.concept_id in target:
            queries.append(Query(d.concept_id, query_lang, d.sentences[0]))
            qrels[d.concept_id] = {target[d.concept_id]: 1}
    if not queries:
        raise ValueError(f"no concept has pages in both '{query_lang}' and '{doc_lang}'")
    return RetrievalTask(queries, qrels, collection)


def classification_split(
    docs: list[Document], train_lang: str, test_lang: str, val_fraction: float = 0.2, seed: int = 0
) -> tuple[list[Document], list[Document], list[Document]]:
    """Train/validation from ``train_lang`` pages (seeded shuffle), test = all ``test_lang`` pages."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    source = [d for d in docs if d.lang == train_lang]
    test = [d for d in docs if d.lang == test_lang]
    if len(source) < 2 or not test:
        raise ValueError(f"not enough '{train_lang}' or '{test_lang}' documents to split")
    order = np.random.default_rng(seed).permutation(len(source))
    n_val = max(1, int(round(val_fraction * len(source))))
    train = [source[i] for i in sorted(order[n_val:])]
    val = [source[i] for i in sorted(order[:n_val])]
    return train, val, test
