"""
Segments, windows and truncation
================================

The hierarchical encoder reads a document as a list of segments: real
sentences by default, or fixed 128-token chunks. The flat baselines see one
token stream instead, either cut into overlapping windows whose embeddings
are averaged, or truncated to its first 128 positions.
"""

import numpy as np

from hmde.corpus import Document, build_vocab, document_token_stream, segment_document
from hmde.model import HmdeConfig, HmdeModel
from hmde.retrieval import build_index, sliding_windows
from hmde.transformer import TransformerConfig

print("windows over 300 tokens:", sliding_windows(300, 128))
print("windows over 100 tokens:", sliding_windows(100, 128))
print("windows over 600 tokens:", sliding_windows(600, 128))

rng = np.random.default_rng(0)
lexicon = [f"w{i}" for i in range(50)]
doc = Document("long", "xa", "c", ["k"], "long",
               [" ".join(rng.choice(lexicon, size=30)) for _ in range(10)])
vocab = build_vocab([doc])
stream = document_token_stream(doc, vocab)
print(f"\n{len(doc.sentences)} sentences, {len(stream)} tokens")
print("sentence segments:", [len(s) for s in segment_document(doc, vocab, "sentence")])
print("chunk segments:   ", [len(s) for s in segment_document(doc, vocab, "chunk")], "([BOS] included)")

model = HmdeModel(HmdeConfig(
    lower=TransformerConfig(hidden_size=16, num_layers=1, num_heads=2, ff_size=32),
    upper=TransformerConfig(hidden_size=16, num_layers=1, num_heads=2, ff_size=32, max_positions=40),
), vocab)

# truncation is blind to everything after the first positions
tail_edit = Document("edit", "xa", "c", ["k"], "edit", doc.sentences[:-1] + ["w1 w2 w3"])
for encoder in ("hmde", "sliding", "truncated"):
    index = build_index([doc, tail_edit], model, encoder)
    same = np.array_equal(index.embeddings[0], index.embeddings[1])
    print(f"{encoder:9s} sees the edited last sentence: {not same}")
