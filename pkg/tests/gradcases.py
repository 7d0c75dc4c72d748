"""Finite-difference gradient cases, one builder per differentiable operation.

Each builder takes a seed and returns ``(fn, inputs)`` for ``check_gradients``.
"""

from __future__ import annotations

import numpy as np

from hmde import tensor as T
from hmde.objective import ContrastiveBatch, contrastive_loss
from hmde.pipeline import ClassifierHead
from hmde.tensor import Tensor
from hmde.transformer import EncoderLayer, TransformerConfig, encoder_layer, multi_head_attention


def _leaf(rng, shape, scale=1.0):
    return Tensor(rng.normal(0.0, scale, shape), requires_grad=True)


def case_matmul(seed):
    rng = np.random.default_rng(seed)
    return T.matmul, [_leaf(rng, (3, 4)), _leaf(rng, (4, 5))]


def case_softmax(seed):
    rng = np.random.default_rng(seed)
    return (lambda x: T.softmax(x, axis=-1)), [_leaf(rng, (3, 4))]


def case_log_softmax(seed):
    rng = np.random.default_rng(seed)
    return (lambda x: T.log_softmax(x, axis=-1)), [_leaf(rng, (3, 4))]


def case_layer_norm(seed):
    rng = np.random.default_rng(seed)
    x, g, b = _leaf(rng, (3, 4)), _leaf(rng, (4,)), _leaf(rng, (4,))
    return (lambda x, g, b: T.layer_norm(x, g, b, eps=1e-12)), [x, g, b]


def case_gelu(seed):
    rng = np.random.default_rng(seed)
    return T.gelu, [_leaf(rng, (3, 4), 2.0)]


def case_cosine(seed):
    rng = np.random.default_rng(seed)
    return T.cosine_matrix, [_leaf(rng, (3, 4)), _leaf(rng, (2, 4))]


def _small_layer(rng, h=8, heads=2, ff=12):
    cfg = TransformerConfig(hidden_size=h, num_layers=1, num_heads=heads, ff_size=ff, dropout=0.0, max_positions=8)
    layer = EncoderLayer.init(cfg, rng)
    for name, p in vars(layer).items():
        # larger weights than the training init so every path carries signal
        p.data = rng.normal(0.0, 0.5, p.shape).astype(np.float32)
        if "gamma" in name:
            p.data += 1.0
        p.requires_grad = True
    return cfg, layer


def case_attention(seed):
    rng = np.random.default_rng(seed)
    cfg, layer = _small_layer(rng)
    mask = np.array([[True, True, True, False], [True, True, True, True]])
    x = _leaf(rng, (2, 4, cfg.hidden_size))
    wq, wo = layer.w_qkv, layer.w_out

    def fn(x, wq, wo):
        layer.w_qkv, layer.w_out = wq, wo
        return multi_head_attention(x, mask, layer, cfg.num_heads)

    return fn, [x, wq, wo]


def case_encoder_layer(seed):
    rng = np.random.default_rng(seed)
    cfg, layer = _small_layer(rng)
    mask = np.array([[True, True, False], [True, True, True]])
    x = _leaf(rng, (2, 3, cfg.hidden_size))
    names = ["ln1_gamma", "w_qkv", "w_out", "ln2_beta", "w_ff1", "b_ff2"]

    def fn(x, *params):
        for n, p in zip(names, params):
            setattr(layer, n, p)
        return encoder_layer(x, mask, layer, cfg)

    return fn, [x] + [getattr(layer, n) for n in names]


def case_contrastive(seed):
    rng = np.random.default_rng(seed)
    tau = (0.05, 0.1, 1.0)[seed % 3]
    a, p, n = (_leaf(rng, (3, 5)) for _ in range(3))

    def fn(a, p, n):
        return contrastive_loss(ContrastiveBatch(a, p, n, temperature=tau))

    return fn, [a, p, n]


def case_classifier_head(seed):
    rng = np.random.default_rng(seed)
    d = _leaf(rng, (4, 6))
    head = ClassifierHead(_leaf(rng, (3, 6)), _leaf(rng, (3,)))
    labels = rng.integers(0, 3, size=4)

    def fn(d, w, b):
        head.weight, head.bias = w, b
        return T.cross_entropy(head.logits(d), labels)

    return fn, [d, head.weight, head.bias]


CASES = {
    "matmul": case_matmul,
    "softmax": case_softmax,
    "log_softmax": case_log_softmax,
    "layer_norm": case_layer_norm,
    "gelu": case_gelu,
    "cosine": case_cosine,
    "attention": case_attention,
    "encoder_layer": case_encoder_layer,
    "contrastive_loss": case_contrastive,
    "classifier_head": case_classifier_head,
}
