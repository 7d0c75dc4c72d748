import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hmde.objective import ContrastiveBatch, contrastive_loss, similarity_matrix
from hmde.tensor import DegenerateVectorError, Tensor

import oracles


def loss_of(a, p, n, tau=0.1):
    return contrastive_loss(ContrastiveBatch(Tensor(a), Tensor(p), Tensor(n), tau)).item()


def test_self_similarity_diagonal():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 6))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    np.testing.assert_allclose(np.diag(similarity_matrix(Tensor(a), Tensor(a)).data), 1.0, atol=1e-6)


def test_orthonormal_rows_give_identity():
    q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(5, 5)))
    np.testing.assert_allclose(similarity_matrix(Tensor(q), Tensor(q)).data, np.eye(5), atol=1e-6)


def test_similarity_matches_pairwise_cosine():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(3, 7)).astype(np.float32), rng.normal(size=(4, 7)).astype(np.float32)
    got = similarity_matrix(Tensor(a), Tensor(b)).data
    ref = [[oracles.scalar_cosine(x, y) for y in b] for x in a]
    np.testing.assert_allclose(got, ref, atol=1e-6)


def test_zero_row_is_named():
    a = np.ones((3, 2))
    a[2] = 0
    with pytest.raises(DegenerateVectorError, match="row 2"):
        similarity_matrix(Tensor(a), Tensor(np.ones((2, 2))))


def test_single_pair_with_equal_similarities_is_ln2():
    v = np.array([[1.0, 2.0, -0.5]])
    assert loss_of(v, v, v, tau=1.0) == pytest.approx(math.log(2), abs=1e-6)


def test_two_pairs_all_equal_is_two_ln3():
    v = np.ones((2, 3))
    assert loss_of(v, v, v, tau=1.0) == pytest.approx(2 * math.log(3), abs=1e-6)


def test_fixed_two_by_two_matches_scalar_equation():
    a = np.array([[1.0, 0.2], [-0.3, 0.9]])
    p = np.array([[0.8, 0.1], [0.5, 0.5]])
    n = np.array([[0.1, 1.0], [-1.0, 0.3]])
    ref = oracles.scalar_contrastive_loss(a, p, n, 0.1)
    assert loss_of(a, p, n, 0.1) == pytest.approx(ref, abs=1e-5)


def test_random_batches_match_scalar_equation():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n, h = rng.integers(1, 9), rng.integers(1, 17)
        tau = float(rng.choice([0.05, 0.1, 1.0]))
        a, p, neg = (rng.normal(size=(n, h)).astype(np.float32) for _ in range(3))
        assert abs(loss_of(a, p, neg, tau) - oracles.scalar_contrastive_loss(a, p, neg, tau)) < 1e-5


def test_batch_validation():
    v = Tensor(np.ones((2, 3)))
    with pytest.raises(ValueError, match="temperature"):
        ContrastiveBatch(v, v, v, temperature=0.0)
    with pytest.raises(ValueError):
        ContrastiveBatch(v, Tensor(np.ones((3, 3))), v)
    with pytest.raises(ValueError, match="empty"):
        e = Tensor(np.ones((0, 3)))
        ContrastiveBatch(e, e, e)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**16), st.floats(0.05, 1.0), st.floats(0.1, 3.0))
def test_loss_monotone_in_positive_and_hard_negative(seed, tau, bump):
    # anchors are basis vectors e0, e1, e2; p0 and n0 have no e1/e2 component,
    # so moving them along e0 changes only S[0][0] and h0 respectively
    rng = np.random.default_rng(seed)
    h = 6
    a = np.eye(h)[:3]
    p = rng.normal(size=(3, h))
    neg = rng.normal(size=(3, h))
    p[0, 1:3] = neg[0, 1:3] = 0.0
    p[0, 0] = abs(p[0, 0])
    neg[0, 0] = abs(neg[0, 0])
    base = loss_of(a, p, neg, tau)

    closer = p.copy()
    closer[0, 0] += bump
    assert loss_of(a, closer, neg, tau) < base

    harder = neg.copy()
    harder[0, 0] += bump
    assert loss_of(a, p, harder, tau) > base


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**16), st.floats(0.1, 50.0), st.integers(0, 3))
def test_loss_ignores_row_scale(seed, c, row):
    rng = np.random.default_rng(seed)
    a, p, n = (rng.normal(size=(4, 5)).astype(np.float32) for _ in range(3))
    scaled = a.copy()
    scaled[row] *= c
    assert loss_of(scaled, p, n) == pytest.approx(loss_of(a, p, n), abs=1e-6 * max(1.0, loss_of(a, p, n)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**16), st.integers(1, 8))
def test_loss_is_positive(seed, n):
    rng = np.random.default_rng(seed)
    a, p, neg = (rng.normal(size=(n, 4)) for _ in range(3))
    assert loss_of(a, p, neg) > 0
