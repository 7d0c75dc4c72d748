import json

import pytest
from hypothesis import given, strategies as st

from hmde.corpus import (
    BOS,
    UNK,
    IntegrityError,
    ParseError,
    TrainingTriple,
    Vocabulary,
    build_vocab,
    chunk_tokens,
    document_token_stream,
    downsample_triples,
    load_dump,
    load_triples,
    segment_document,
    split_sentences,
    tokenize,
    write_dump,
    write_triples,
)

from conftest import make_doc


def record(**kw):
    rec = {"doc_id": "d1", "lang": "xa", "concept_id": "Q1", "categories": ["c"], "title": "t", "sentences": ["a b ."]}
    rec.update(kw)
    return rec


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


# -- dump I/O -----------------------------------------------------------------


def test_empty_dump(tmp_path):
    assert load_dump(write_lines(tmp_path / "d.jsonl", [])) == []


def test_three_records_keep_order(tmp_path):
    recs = [record(doc_id=f"d{i}") for i in (3, 1, 2)]
    docs = load_dump(write_lines(tmp_path / "d.jsonl", recs))
    assert [d.doc_id for d in docs] == ["d3", "d1", "d2"]


def test_missing_field_is_named(tmp_path):
    rec = record()
    del rec["concept_id"]
    with pytest.raises(ParseError, match="line 2.*concept_id"):
        load_dump(write_lines(tmp_path / "d.jsonl", [record(doc_id="x"), rec]))


def test_text_field_is_split(tmp_path):
    rec = record(text="One two. Three four!\nfive")
    del rec["sentences"]
    (doc,) = load_dump(write_lines(tmp_path / "d.jsonl", [rec]))
    assert doc.sentences == ["One two.", "Three four!", "five"]


@pytest.mark.parametrize(
    "bad, msg",
    [
        ("{not json", "invalid JSON"),
        (json.dumps(record(extra=1)), "unknown field 'extra'"),
        (json.dumps(record(categories="c")), "categories"),
        (json.dumps(record(sentences=[])), "no sentences"),
        (json.dumps({**record(), "text": "x"}), "exactly one"),
    ],
)
def test_malformed_lines(tmp_path, bad, msg):
    path = tmp_path / "d.jsonl"
    path.write_text(bad + "\n")
    with pytest.raises(ParseError, match=msg):
        load_dump(path)


def test_duplicate_doc_id(tmp_path):
    with pytest.raises(IntegrityError, match="d1"):
        load_dump(write_lines(tmp_path / "d.jsonl", [record(), record()]))


def test_labeled_round_trip(tmp_path, toy_docs):
    path = tmp_path / "l.jsonl"
    write_dump(toy_docs, path, labeled=True)
    assert load_dump(path, labeled=True) == toy_docs


def test_labeled_dump_needs_labels(tmp_path):
    with pytest.raises(ParseError, match="label"):
        load_dump(write_lines(tmp_path / "l.jsonl", [record()]), labeled=True)


def test_label_field_rejected_in_unlabeled_dump(tmp_path):
    with pytest.raises(ParseError, match="label"):
        load_dump(write_lines(tmp_path / "d.jsonl", [record(label=1)]))


def test_triples_round_trip(tmp_path):
    triples = [TrainingTriple("a", "b", "c"), TrainingTriple("b", "a", "d")]
    write_triples(triples, tmp_path / "t.jsonl")
    assert load_triples(tmp_path / "t.jsonl") == triples


# -- segmentation -------------------------------------------------------------


def test_split_sentences_examples():
    assert split_sentences("A b. C d.") == ["A b.", "C d."]
    assert split_sentences("no terminator") == ["no terminator"]
    assert split_sentences("x.\ny") == ["x.", "y"]
    assert split_sentences("") == []
    assert split_sentences("v1.2 stays whole? yes") == ["v1.2 stays whole?", "yes"]


def test_chunk_examples():
    assert [len(c) for c in chunk_tokens(list(range(300)), 128)] == [128, 128, 44]
    assert [len(c) for c in chunk_tokens(list(range(128)), 128)] == [128]
    assert chunk_tokens([], 128) == []
    with pytest.raises(ValueError):
        chunk_tokens([1], 0)


@given(st.lists(st.integers(0, 1000), max_size=400), st.integers(1, 150))
def test_chunks_concatenate_back(tokens, size):
    chunks = chunk_tokens(tokens, size)
    assert [t for c in chunks for t in c] == tokens
    assert all(len(c) == size for c in chunks[:-1])


def test_sentence_segments_are_truncated_with_bos():
    doc = make_doc("d", "a", "c", [], [" ".join(["w"] * 300)])
    vocab = Vocabulary(["w"])
    (seg,) = segment_document(doc, vocab, "sentence", max_tokens=128)
    assert len(seg) == 128 and seg[0] == BOS


def test_chunk_segments_carry_bos_on_top():
    doc = make_doc("d", "a", "c", [], ["w " * 100, "w " * 200])
    vocab = Vocabulary(["w"])
    segs = segment_document(doc, vocab, "chunk", chunk_size=128)
    assert [len(s) for s in segs] == [129, 129, 45]
    assert all(s[0] == BOS for s in segs)
    assert len(document_token_stream(doc, vocab)) == 300


def test_unknown_segmentation_mode():
    with pytest.raises(ValueError, match="segmentation"):
        segment_document(make_doc("d", "a", "c", [], ["x"]), Vocabulary([]), "paragraph")


# -- vocabulary ---------------------------------------------------------------


def test_min_frequency_cutoff():
    vocab = build_vocab([make_doc("d", "a", "c", [], ["a a b"])], min_frequency=2)
    assert vocab.tokens == ["[PAD]", "[UNK]", "[BOS]", "a"]


def test_ids_by_frequency_then_lexicographic():
    vocab = build_vocab([make_doc("d", "a", "c", [], ["c b a b"])])
    assert [vocab.id(w) for w in ("b", "a", "c")] == [3, 4, 5]
    assert build_vocab([make_doc("d", "a", "c", [], ["c b a b"])]) == vocab


def test_vocab_file_round_trip(tmp_path, toy_vocab):
    path = tmp_path / "v.txt"
    toy_vocab.save(path)
    lines = path.read_text().splitlines()
    assert lines[:3] == ["[PAD]", "[UNK]", "[BOS]"]
    assert lines.index(toy_vocab.tokens[5]) == 5
    assert Vocabulary.load(path) == toy_vocab


def test_vocab_file_needs_reserved_header(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("a\nb\n")
    with pytest.raises(ParseError):
        Vocabulary.load(path)


def test_tokenize_examples():
    vocab = Vocabulary(["hello", "world"])
    assert tokenize("Hello WORLD", vocab) == [BOS, 3, 4]
    assert tokenize("unseen", vocab) == [BOS, UNK]
    assert tokenize("", vocab) == [BOS]


# -- downsampling -------------------------------------------------------------


def _triples(n):
    return [TrainingTriple(f"a{i}", f"p{i}", f"n{i}") for i in range(n)]


def test_downsample_examples():
    ts = _triples(20)
    assert downsample_triples(ts, 20, 0) == ts
    assert downsample_triples(ts, 0, 0) == []
    assert downsample_triples(ts, 7, 3) == downsample_triples(ts, 7, 3)
    with pytest.raises(ValueError):
        downsample_triples(ts, 21, 0)


@given(st.integers(0, 40), st.integers(0, 2**16))
def test_downsample_is_an_ordered_subset(k, seed):
    ts = _triples(40)
    out = downsample_triples(ts, k, seed)
    assert len(out) == k == len(set(out))
    idx = [ts.index(t) for t in out]
    assert idx == sorted(idx)
