"""Contrastive pretraining, classification fine-tuning, and accuracy evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .corpus import Document, IntegrityError, TrainingTriple
from .model import HmdeModel, encode_documents, set_lower_frozen
from .objective import ContrastiveBatch, contrastive_loss
from .optim import AdamW, LrSchedule, lr_at_step
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)


@dataclass
class PretrainConfig:
    batch_size: int = 2
    grad_accumulation: int = 64
    epochs: int = 1
    base_lr: float = 1e-5
    warmup_steps: int = 1000
    temperature: float = 0.1
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.batch_size < 1 or self.grad_accumulation < 1 or self.epochs < 1:
            raise ValueError("batch_size, grad_accumulation and epochs must be >= 1")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")

    @property
    def effective_batch(self) -> int:
        return self.batch_size * self.grad_accumulation


@dataclass
class FinetuneConfig:
    lr: float = 2e-5
    batch_size: int = 4
    grad_accumulation: int = 8
    max_epochs: int = 50
    warmup_steps: int = 200
    patience: int = 7
    num_classes: int = 4
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.batch_size < 1 or self.grad_accumulation < 1 or self.max_epochs < 1 or self.warmup_steps < 1:
            raise ValueError("batch_size, grad_accumulation, max_epochs and warmup_steps must be >= 1")


@dataclass
class ClassifierHead:
    weight: Tensor  # [C, h]
    bias: Tensor  # [C]

    @classmethod
    def init(cls, num_classes: int, hidden_size: int, seed: int = 0, std: float = 0.02) -> "ClassifierHead":
        rng = np.random.default_rng(seed)
        return cls(
            Tensor(rng.normal(0.0, std, (num_classes, hidden_size)), requires_grad=True, name="head.weight"),
            Tensor(np.zeros(num_classes), requires_grad=True, name="head.bias"),
        )

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    def named_parameters(self) -> dict[str, Tensor]:
        return {"head.weight": self.weight, "head.bias": self.bias}

    def logits(self, docs: Tensor) -> Tensor:
        if docs.shape[-1] != self.weight.shape[1] or self.bias.shape != (self.weight.shape[0],):
            raise T.ShapeError(
                f"head {self.weight.shape}/{self.bias.shape} does not fit embeddings {docs.shape}"
            )
        return docs @ self.weight.transpose() + self.bias


def _make_schedule(base_lr: float, warmup: int, total: int) -> LrSchedule:
    # short desk runs cannot fit the full warm-up; the ramp is clipped to the run
    return LrSchedule(base_lr, min(warmup, total), total)


def optimizer_steps_per_epoch(num_batches: int, grad_accumulation: int) -> int:
    return math.ceil(num_batches / grad_accumulation)


# -- pretraining -------------------------------------------------------------------


@dataclass
class PretrainResult:
    batch_losses: list[float] = field(default_factory=list)  # summed over anchors
    step_losses: list[float] = field(default_factory=list)  # mean per anchor within each step
    step_lrs: list[float] = field(default_factory=list)
    optimizer_steps: int = 0


def pretrain(
    model: HmdeModel,
    triples: Sequence[TrainingTriple],
    documents: Sequence[Document],
    cfg: PretrainConfig,
) -> PretrainResult:
    """Contrastive training over mined triples with gradient accumulation.

    Each batch of ``batch_size`` triples is encoded in training mode, the summed
    contrastive loss is back-propagated, and AdamW steps every
    ``grad_accumulation`` batches (plus once for a trailing partial window).
    """
    by_id = {d.doc_id: d for d in documents}
    for t in triples:
        for doc_id in (t.anchor_id, t.positive_id, t.negative_id):
            if doc_id not in by_id:
                raise IntegrityError(f"triple references unknown doc_id '{doc_id}'")
    if not triples:
        raise ValueError("no triples to train on")

    segments = {}
    for t in triples:
        for doc_id in (t.anchor_id, t.positive_id, t.negative_id):
            if doc_id not in segments:
                segments[doc_id] = model.segments(by_id[doc_id])

    num_batches = math.ceil(len(triples) / cfg.batch_size)
    per_epoch = optimizer_steps_per_epoch(num_batches, cfg.grad_accumulation)
    sched = _make_schedule(cfg.base_lr, cfg.warmup_steps, per_epoch * cfg.epochs)
    params = model.trainable_parameters()
    opt = AdamW(params, betas=cfg.betas, weight_decay=cfg.weight_decay)
    opt.zero_grad()
    shuffle_rng = np.random.default_rng(cfg.seed)
    result = PretrainResult()

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(triples))
        window_loss, window_anchors = 0.0, 0
        for b in range(num_batches):
            batch = [triples[i] for i in order[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
            n = len(batch)
            ids = [t.anchor_id for t in batch] + [t.positive_id for t in batch] + [t.negative_id for t in batch]
            emb, _ = encode_documents([segments[i] for i in ids], model, rng=model.dropout_rng)
            loss = contrastive_loss(
                ContrastiveBatch(emb[0:n], emb[n : 2 * n], emb[2 * n : 3 * n], cfg.temperature)
            )
            loss.backward()
            value = loss.item()
            result.batch_losses.append(value)
            window_loss += value
            window_anchors += n

            if (b + 1) % cfg.grad_accumulation == 0 or b + 1 == num_batches:
                result.optimizer_steps += 1
                lr = lr_at_step(sched, result.optimizer_steps)
                opt.step(lr)
                opt.zero_grad()
                result.step_lrs.append(lr)
                result.step_losses.append(window_loss / window_anchors)
                log.debug(
                    "epoch %d step %d lr %.3g loss/anchor %.4f",
                    epoch, result.optimizer_steps, lr, result.step_losses[-1],
                )
                window_loss, window_anchors = 0.0, 0
    return result


# -- classification ------------------------------------------------------------------


def _embed(docs: Sequence[Document], model: HmdeModel, rng=None) -> Tensor:
    return encode_documents([model.segments(d) for d in docs], model, rng=rng)[0]


def classify(doc: Document, model: HmdeModel, head: ClassifierHead) -> np.ndarray:
    """Class probabilities softmax(W d + b) in evaluation mode."""
    with no_grad():
        logits = head.logits(_embed([doc], model))
        return T.softmax(logits, axis=-1).data[0]


def predict_proba(docs: Sequence[Document], model: HmdeModel, head: ClassifierHead, batch_size: int = 16) -> np.ndarray:
    rows = []
    with no_grad():
        for i in range(0, len(docs), batch_size):
            logits = head.logits(_embed(docs[i : i + batch_size], model))
            rows.append(T.softmax(logits, axis=-1).data)
    return np.concatenate(rows, axis=0)


def evaluate_accuracy(
    model: HmdeModel, head: ClassifierHead, docs: Sequence[Document], labels: Sequence[int]
) -> float:
    """Fraction of argmax-correct predictions; ties resolve to the lowest class index."""
    if len(docs) == 0:
        raise ValueError("cannot evaluate accuracy on an empty set")
    if len(docs) != len(labels):
        raise ValueError(f"{len(docs)} documents but {len(labels)} labels")
    probs = predict_proba(docs, model, head)
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


def validation_loss(
    model: HmdeModel, head: ClassifierHead, docs: Sequence[Document], labels: Sequence[int], batch_size: int = 16
) -> float:
    total = 0.0
    with no_grad():
        for i in range(0, len(docs), batch_size):
            logits = head.logits(_embed(docs[i : i + batch_size], model))
            total += T.cross_entropy(logits, labels[i : i + batch_size]).item() * len(logits)
    return total / len(docs)


class EarlyStopping:
    """Tracks the best (strictly lowest) loss; stops after ``patience`` epochs without one."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.epoch = 0
        self.since_best = 0

    def update(self, loss: float) -> bool:
        """Record one epoch's loss; returns True if it is a new best."""
        self.epoch += 1
        if loss < self.best:
            self.best, self.best_epoch, self.since_best = loss, self.epoch, 0
            return True
        self.since_best += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.since_best >= self.patience


@dataclass
class FinetuneResult:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    optimizer_steps: int = 0


def finetune_classifier(
    model: HmdeModel,
    head: ClassifierHead,
    train_docs: Sequence[Document],
    train_labels: Sequence[int],
    val_docs: Sequence[Document],
    val_labels: Sequence[int],
    cfg: FinetuneConfig,
    val_loss_fn: Callable[[HmdeModel, ClassifierHead], float] | None = None,
) -> FinetuneResult:
    """Cross-entropy fine-tuning of encoder and head with early stopping on validation loss.

    The lower transformer is always trainable here. On return, ``model`` and
    ``head`` hold the parameters of the best validation epoch.
    """
    C = head.num_classes
    for name, labels in (("training", train_labels), ("validation", val_labels)):
        bad = [y for y in labels if not 0 <= y < C]
        if bad:
            raise ValueError(f"{name} label {bad[0]} outside [0, {C})")
    if not val_docs:
        raise ValueError("validation set is empty")
    if len(train_docs) != len(train_labels) or len(val_docs) != len(val_labels):
        raise ValueError("documents and labels differ in length")
    if val_loss_fn is None:
        def val_loss_fn(m, h):
            return validation_loss(m, h, val_docs, list(val_labels))

    set_lower_frozen(model, False)
    named = {**model.named_parameters(), **head.named_parameters()}
    params = list(named.values())
    opt = AdamW(params, weight_decay=cfg.weight_decay)
    opt.zero_grad()

    segments = [model.segments(d) for d in train_docs]
    labels = np.asarray(train_labels, dtype=np.int64)
    num_batches = math.ceil(len(train_docs) / cfg.batch_size)
    per_epoch = optimizer_steps_per_epoch(num_batches, cfg.grad_accumulation)
    sched = _make_schedule(cfg.lr, cfg.warmup_steps, per_epoch * cfg.max_epochs)
    shuffle_rng = np.random.default_rng(cfg.seed)

    stopper = EarlyStopping(cfg.patience)
    best = {k: p.data.copy() for k, p in named.items()}
    result = FinetuneResult()
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_docs))
        epoch_loss = 0.0
        for b in range(num_batches):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            emb, _ = encode_documents([segments[i] for i in idx], model, rng=model.dropout_rng)
            loss = T.cross_entropy(head.logits(emb), labels[idx])
            loss.backward()
            epoch_loss += loss.item() * len(idx)
            if (b + 1) % cfg.grad_accumulation == 0 or b + 1 == num_batches:
                result.optimizer_steps += 1
                opt.step(lr_at_step(sched, result.optimizer_steps))
                opt.zero_grad()
        result.train_losses.append(epoch_loss / len(train_docs))

        val = float(val_loss_fn(model, head))
        result.val_losses.append(val)
        result.epochs_run = epoch
        if stopper.update(val):
            best = {k: p.data.copy() for k, p in named.items()}
        log.debug("epoch %d train %.4f val %.4f", epoch, result.train_losses[-1], val)
        if stopper.should_stop:
            break

    for k, p in named.items():
        p.data = best[k]
    result.best_epoch = stopper.best_epoch
    return result
