import sys

import numpy as np
import pytest

from hmde.corpus import Document, Vocabulary, build_vocab
from hmde.model import HmdeConfig, HmdeModel
from hmde.transformer import TransformerConfig


def tiny_config(upper_layers=2, dropout=0.0, **kw):
    lower = TransformerConfig(hidden_size=8, num_layers=1, num_heads=2, ff_size=16, dropout=dropout, max_positions=130)
    upper = TransformerConfig(
        hidden_size=8, num_layers=upper_layers, num_heads=2, ff_size=16, dropout=dropout, max_positions=40
    )
    return HmdeConfig(lower=lower, upper=upper, **kw)


def make_doc(doc_id, lang, concept, cats, sentences, label=None):
    return Document(doc_id, lang, concept, list(cats), doc_id, list(sentences), label)


@pytest.fixture
def toy_docs():
    return [
        make_doc("a-1", "a", "c1", ["x"], ["alpha beta gamma .", "beta delta ."], 0),
        make_doc("b-1", "b", "c1", ["x"], ["uno dos .", "tres dos uno ."], 0),
        make_doc("a-2", "a", "c2", ["x", "y"], ["gamma gamma epsilon ."], 1),
        make_doc("b-2", "b", "c2", ["x", "y"], ["cuatro uno ."], 1),
        make_doc("a-3", "a", "c3", ["y"], ["delta epsilon alpha .", "alpha ."], 0),
        make_doc("b-3", "b", "c3", ["y"], ["cinco tres .", "dos ."], 1),
    ]


@pytest.fixture
def toy_vocab(toy_docs) -> Vocabulary:
    return build_vocab(toy_docs)


@pytest.fixture
def tiny_model(toy_vocab) -> HmdeModel:
    return HmdeModel(tiny_config(), toy_vocab)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts, one line per criterion, after the run."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
