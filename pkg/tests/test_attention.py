import math

import numpy as np
import pytest

from spmix.attention import AttentionLayer, attention_backward, attention_forward
from spmix.dense import DenseLayer, from_spm
from spmix.errors import UsageError
from spmix.gradcheck import check_attention


def identity_layer(d):
    return AttentionLayer(*(DenseLayer(np.eye(d)) for _ in range(4)))


def straight_line(layer, X):
    """Loop-based evaluation through materialized projections."""
    T, d = X.shape
    W = {}
    for k, p in layer.proj.items():
        dense = from_spm(p) if p.kind == "spm" else p
        W[k] = (dense.W, dense.bias)
    proj = {k: [[sum(W[k][0][i, j] * X[t, j] for j in range(d)) + W[k][1][i] for i in range(d)]
                for t in range(T)] for k in "QKV"}
    H = []
    for t in range(T):
        scores = [sum(proj["Q"][t][i] * proj["K"][u][i] for i in range(d)) / math.sqrt(layer.d_h)
                  for u in range(T)]
        m = max(scores)
        e = [math.exp(s - m) for s in scores]
        a = [v / sum(e) for v in e]
        H.append([sum(a[u] * proj["V"][u][i] for u in range(T)) for i in range(d)])
    Wo, bo = W["O"]
    return np.array([[sum(Wo[i, j] * H[t][j] for j in range(d)) + bo[i] for i in range(d)] for t in range(T)])


def test_single_position():
    layer = AttentionLayer.create(4, "spm", seed=1, scheme="random")
    X = np.random.default_rng(1).normal(size=(1, 4))
    Y, tape = attention_forward(layer, X)
    assert np.array_equal(tape.A, [[1.0]])
    assert np.abs(Y - layer.proj["O"](layer.proj["V"](X))).max() < 1e-14


def test_identity_projections_saturate():
    X = 20.0 * np.eye(4)[:3]
    Y, tape = attention_forward(identity_layer(4), X)
    assert np.abs(tape.A - np.eye(3)).max() < 1e-80
    assert np.abs(Y - X).max() < 1e-70


@pytest.mark.parametrize("kind", ["dense", "spm"])
def test_matches_straight_line_oracle(kind):
    layer = AttentionLayer.create(4, kind, "general", seed=2, scheme="random")
    X = np.random.default_rng(2).normal(size=(3, 4))
    assert np.abs(attention_forward(layer, X)[0] - straight_line(layer, X)).max() < 1e-12


def test_d_h_only_scales_scores():
    X = np.random.default_rng(3).normal(size=(5, 4))
    a = AttentionLayer.create(4, "spm", seed=3)
    b = AttentionLayer.create(4, "spm", seed=3, d_h=1)
    Sa, Sb = attention_forward(a, X)[1].S, attention_forward(b, X)[1].S
    assert np.allclose(Sa * 2, Sb, rtol=1e-14)


def test_rows_sum_to_one_and_norms_preserved():
    layer = AttentionLayer.create(8, "spm", "rotation", seed=4, scheme="random")
    X = np.random.default_rng(4).normal(size=(6, 8))
    _, tape = attention_forward(layer, X)
    assert np.abs(tape.A.sum(-1) - 1).max() < 1e-12
    assert np.abs(np.linalg.norm(tape.Q, axis=1) - np.linalg.norm(X, axis=1)).max() < 1e-10


def test_batched_equals_per_sequence():
    layer = AttentionLayer.create(4, "spm", "general", seed=5, scheme="random")
    r = np.random.default_rng(5)
    Xb, Gb = r.normal(size=(3, 5, 4)), r.normal(size=(3, 5, 4))
    Yb, tb = attention_forward(layer, Xb)
    gb, GXb = attention_backward(layer, tb, Gb)
    total = {k: np.zeros_like(v) for k, v in gb.items()}
    for i in range(3):
        Y, t = attention_forward(layer, Xb[i])
        assert np.abs(Y - Yb[i]).max() < 1e-14
        g, GX = attention_backward(layer, t, Gb[i])
        assert np.abs(GX - GXb[i]).max() < 1e-13
        for k in total:
            total[k] += g[k]
    for k in total:
        assert np.abs(total[k] - gb[k]).max() < 1e-12


def test_zero_upstream():
    layer = AttentionLayer.create(4, "spm", seed=6)
    X = np.random.default_rng(6).normal(size=(3, 4))
    Y, tape = attention_forward(layer, X)
    grads, GX = attention_backward(layer, tape, np.zeros_like(Y))
    assert not GX.any() and all(not g.any() for g in grads.values())


def test_gradcheck_dense_t2_d2():
    report = check_attention(2, 2, "dense", seed=7)
    assert report.max_error < 1e-6, report.lines()


@pytest.mark.parametrize("variant", ["rotation", "general"])
def test_gradcheck_spm_t3_d4(variant):
    report = check_attention(3, 4, "spm", variant, seed=8)
    assert report.passed, report.lines()
    assert "Q.blocks" in report.errors and "O.d_out" in report.errors


def test_key_bias_gradient_is_zero():
    # softmax ignores a per-row constant, and K's bias only adds one
    layer = AttentionLayer.create(4, "spm", seed=9, scheme="random")
    r = np.random.default_rng(9)
    X, G = r.normal(size=(3, 4)), r.normal(size=(3, 4))
    grads, _ = attention_backward(layer, attention_forward(layer, X)[1], G)
    assert np.abs(grads["K.bias"]).max() < 1e-14


def test_dense_vs_materialized_spm_projections():
    spm = AttentionLayer.create(6, "spm", "general", seed=10, scheme="random")
    dense = AttentionLayer(*(from_spm(spm.proj[k]) for k in "QKVO"))
    X = np.random.default_rng(10).normal(size=(4, 6))
    assert np.abs(attention_forward(spm, X)[0] - attention_forward(dense, X)[0]).max() < 1e-5


def test_shape_errors():
    layer = AttentionLayer.create(4, "spm")
    with pytest.raises(UsageError):
        attention_forward(layer, np.zeros((3, 5)))
    Y, tape = attention_forward(layer, np.zeros((3, 4)))
    with pytest.raises(UsageError):
        attention_backward(layer, tape, np.zeros((2, 4)))
    with pytest.raises(UsageError):
        AttentionLayer(DenseLayer(np.eye(3)), DenseLayer(np.eye(3)), DenseLayer(np.eye(3)),
                       DenseLayer(np.ones((2, 3))))
