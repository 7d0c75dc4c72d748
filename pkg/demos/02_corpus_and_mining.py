"""
A synthetic comparable corpus and its training triples
=======================================================

Real training data would be interlinked encyclopedia pages in several
languages. Here a generator invents two languages with disjoint word forms,
apart from a shared slice of "entity" words, and writes one page per concept
and language. Pages of one concept are comparable, not parallel: they are
sampled independently from the same topic.

Triples pair each page with the other-language page of its concept and a
same-language page from a shared category as the hard negative.
"""

from collections import Counter

from hmde.corpus import build_vocab, downsample_triples, mine_triples_with_stats
from hmde.synthetic import CorpusSpec, generate_synthetic_corpus

spec = CorpusSpec(num_concepts=30, shared_vocab_fraction=0.2, seed=7)
docs = generate_synthetic_corpus(spec)
by_id = {d.doc_id: d for d in docs}
print(f"{len(docs)} pages, languages {spec.languages}")

# one concept, both languages: the titles (concept names) are shared entity words
a, b = by_id["xa-Q03"], by_id["xb-Q03"]
for page in (a, b):
    print(f"\n[{page.doc_id}] title={page.title!r} categories={page.categories} label={page.label}")
    for s in page.sentences[:2]:
        print("   ", s)

vocab = build_vocab(docs)
shared = set(w for s in a.sentences for w in s.split()) & set(w for s in b.sentences for w in s.split())
print(f"\nvocabulary: {len(vocab)} entries; words common to both pages: {sorted(shared)[:8]}")

triples, stats = mine_triples_with_stats(docs, spec.languages, rng_seed=0)
print("\nmining:", stats.to_dict())
t = triples[0]
print("first triple:", t)
print("  anchor categories  ", by_id[t.anchor_id].categories)
print("  negative categories", by_id[t.negative_id].categories)

# the class label is the group of the concept's primary category
print("\nlabel counts:", dict(sorted(Counter(d.label for d in docs).items())))

# the triple-budget ablation keeps a seeded subset in the original order
print("downsampled to 10:", len(downsample_triples(triples, 10, rng_seed=0)))
