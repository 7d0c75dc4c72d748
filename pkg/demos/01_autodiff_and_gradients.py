"""
Reverse-mode autodiff on numpy arrays
=====================================

The encoder is trained with a small tape-free autodiff engine: every
operation returns a Tensor that remembers its parents and a closure that
pushes gradients back to them. This walk-through builds a few expressions,
runs backward, and compares against central finite differences.
"""

import numpy as np

from hmde import tensor as T
from hmde.gradcheck import check_gradients
from hmde.tensor import Tensor

rng = np.random.default_rng(0)

# a scalar expression: d/dx (x*x + x) = 2x + 1
x = Tensor([3.0], requires_grad=True)
(x * x + x).sum().backward()
print("d(x^2 + x)/dx at 3:", x.grad[0])

# gradients accumulate across backward calls until zero_grad
(x * x + x).sum().backward()
print("after a second backward:", x.grad[0])
x.zero_grad()

# a softmax-weighted sum; the engine handles broadcasting and reductions
logits = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
weights = Tensor(rng.normal(size=(2, 5)))
loss = (T.softmax(logits, axis=-1) * weights).sum()
loss.backward()
print("softmax grad rows sum to ~0:", np.round(logits.grad.sum(axis=-1), 6))

# finite-difference check of a layer norm, the way the test-suite does it
h = 6
inputs = [Tensor(rng.normal(size=(3, h)), requires_grad=True),
          Tensor(rng.normal(size=h), requires_grad=True),
          Tensor(rng.normal(size=h), requires_grad=True)]
errors = check_gradients(lambda a, g, b: T.layer_norm(a, g, b), inputs, seed=1)
print("layer norm relative errors (x, gamma, beta):", [f"{e:.1e}" for e in errors])

# cosine similarity refuses zero vectors instead of returning nan
try:
    T.cosine_similarity(Tensor([0.0, 0.0]), Tensor([1.0, 0.0]))
except T.DegenerateVectorError as exc:
    print("degenerate input:", exc)
