"""Cross-lingual contrastive objective with one hard negative per anchor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class ContrastiveBatch:
    anchors: Tensor
    positives: Tensor
    hard_negatives: Tensor
    temperature: float = 0.1

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        shapes = {self.anchors.shape, self.positives.shape, self.hard_negatives.shape}
        if len(shapes) != 1 or self.anchors.ndim != 2:
            raise T.ShapeError(
                "anchors, positives and hard negatives must share one [N, h] shape, got "
                f"{self.anchors.shape}, {self.positives.shape}, {self.hard_negatives.shape}"
            )
        if self.anchors.shape[0] == 0:
            raise ValueError("contrastive batch is empty")


def similarity_matrix(anchors: Tensor, others: Tensor) -> Tensor:
    return T.cosine_matrix(anchors, others)


def contrastive_loss(batch: ContrastiveBatch) -> Tensor:
    """Summed over anchors: -s(a_i, p_i)/tau + log(exp(s(a_i, n_i)/tau) + sum_j exp(s(a_i, p_j)/tau)).

    The sum over j covers every positive in the batch, the anchor's own
    positive included.
    """
    n = batch.anchors.shape[0]
    diag = (np.arange(n), np.arange(n))
    inv_tau = 1.0 / batch.temperature
    pos = similarity_matrix(batch.anchors, batch.positives)
    hard = similarity_matrix(batch.anchors, batch.hard_negatives)[diag]
    logits = T.concat([T.reshape(hard, (n, 1)), pos], axis=1) * inv_tau
    # shifting each row by its positive logit keeps the per-anchor terms small,
    # so float32 does not cancel two large numbers
    margins = logits - T.reshape(pos[diag], (n, 1)) * inv_tau
    return T.sum_(T.logsumexp(margins, axis=1))
