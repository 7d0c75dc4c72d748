"""Hierarchical multilingual document encoder trained with a cross-lingual contrastive objective."""

from .corpus import (
    Document,
    TrainingTriple,
    Vocabulary,
    build_vocab,
    chunk_tokens,
    downsample_triples,
    load_dump,
    mine_triples,
    split_sentences,
    tokenize,
)
from .model import HmdeConfig, HmdeModel, encode_document, encode_query, encode_sentence_batch, set_lower_frozen
from .objective import ContrastiveBatch, contrastive_loss, similarity_matrix
from .pipeline import ClassifierHead, FinetuneConfig, PretrainConfig, classify, evaluate_accuracy, finetune_classifier, pretrain
from .retrieval import average_precision, mean_average_precision, rank_documents
from .synthetic import CorpusSpec, generate_synthetic_corpus
from .tensor import Tensor, no_grad
from .transformer import TransformerConfig

__version__ = "0.1.0"

__all__ = [
    "ClassifierHead",
    "ContrastiveBatch",
    "CorpusSpec",
    "Document",
    "FinetuneConfig",
    "HmdeConfig",
    "HmdeModel",
    "PretrainConfig",
    "Tensor",
    "TrainingTriple",
    "TransformerConfig",
    "Vocabulary",
    "average_precision",
    "build_vocab",
    "chunk_tokens",
    "classify",
    "contrastive_loss",
    "downsample_triples",
    "encode_document",
    "encode_query",
    "encode_sentence_batch",
    "evaluate_accuracy",
    "finetune_classifier",
    "generate_synthetic_corpus",
    "load_dump",
    "mean_average_precision",
    "mine_triples",
    "no_grad",
    "pretrain",
    "rank_documents",
    "set_lower_frozen",
    "similarity_matrix",
    "split_sentences",
    "tokenize",
]
