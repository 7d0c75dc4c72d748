"""AdamW with decoupled weight decay and a linear warm-up / linear decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import DTYPE, Tensor


@dataclass(frozen=True)
class LrSchedule:
    """Linear ramp 0 -> ``base_lr`` over ``warmup_steps``, then linear decay to 0.

    Steps past ``total_steps`` get a learning rate of 0.
    """

    base_lr: float
    warmup_steps: int
    total_steps: int

    def __post_init__(self):
        if not 0 < self.warmup_steps <= self.total_steps:
            raise ValueError(
                f"need 0 < warmup_steps <= total_steps, got {self.warmup_steps} and {self.total_steps}"
            )
        if self.base_lr < 0:
            raise ValueError(f"base_lr must be non-negative, got {self.base_lr}")


def lr_at_step(sched: LrSchedule, step: int) -> float:
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    if step >= sched.total_steps:
        # the ramp peak wins when warmup spans the whole run
        return sched.base_lr if step == sched.warmup_steps == sched.total_steps else 0.0
    if step <= sched.warmup_steps:
        return sched.base_lr * step / sched.warmup_steps
    remaining = sched.total_steps - step
    return sched.base_lr * remaining / (sched.total_steps - sched.warmup_steps)


@dataclass
class AdamWState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


class AdamW:
    """AdamW over a fixed list of parameters.

    Moments live in float64; parameters are stored back as float32. ``step``
    does not clear gradients, call ``zero_grad`` for that.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params = list(params)
        self.state = AdamWState(beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)
        self.state.m = [np.zeros(p.shape, dtype=np.float64) for p in self.params]
        self.state.v = [np.zeros(p.shape, dtype=np.float64) for p in self.params]

    def step(self, lr: float) -> None:
        adamw_step(self.params, self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def adamw_step(params: Sequence[Tensor], state: AdamWState, lr: float) -> None:
    """One AdamW update: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)."""
    if len(state.m) != len(params):
        raise ValueError(f"optimizer state tracks {len(state.m)} tensors, got {len(params)}")
    missing = [i for i, p in enumerate(params) if p.grad is None]
    if missing:
        names = [params[i].name or f"#{i}" for i in missing[:3]]
        raise ValueError(f"adamw_step: no gradient for parameter(s) {names}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad.astype(np.float64)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta = p.data.astype(np.float64)
        update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.data = (theta - lr * (update + state.weight_decay * theta)).astype(DTYPE)
