import numpy as np
import pytest

from spmix.dense import DenseLayer, dense_backward, dense_forward, from_spm
from spmix.errors import UsageError
from spmix.gradcheck import check_dense
from spmix.spm import make_spm


def test_examples(backend):
    x = np.random.default_rng(0).normal(size=(3, 4))
    assert np.allclose(DenseLayer(np.eye(4))(x), x, atol=0)
    c = np.array([1.0, -2.0])
    assert np.array_equal(DenseLayer(np.zeros((2, 4)), c)(x), np.tile(c, (3, 1)))
    assert np.array_equal(DenseLayer(np.array([[1.0, 2], [3, 4]]))(np.ones((1, 2))), [[3, 7]])


def test_zero_upstream(backend):
    layer = DenseLayer.init(3, 5, 0)
    _, tape = dense_forward(layer, np.ones((2, 3)))
    g = dense_backward(layer, tape, np.zeros((2, 5)))
    assert not g.g_W.any() and not g.g_bias.any() and not g.g_x.any()


def test_batch_doubling(backend):
    layer = DenseLayer.init(4, 4, 1)
    r = np.random.default_rng(1)
    x, g = r.normal(size=(1, 4)), r.normal(size=(1, 4))
    one = dense_backward(layer, dense_forward(layer, x)[1], g)
    two = dense_backward(layer, dense_forward(layer, np.vstack([x, x]))[1], np.vstack([g, g]))
    assert np.allclose(two.g_W, 2 * one.g_W, rtol=1e-15, atol=0)


def test_backward_oracle(backend):
    layer = DenseLayer.init(5, 3, 2)
    r = np.random.default_rng(2)
    x, g = r.normal(size=(7, 5)), r.normal(size=(7, 3))
    grads = dense_backward(layer, dense_forward(layer, x)[1], g)
    assert np.abs(grads.g_W - g.T @ x).max() < 1e-12
    assert np.abs(grads.g_bias - g.sum(0)).max() < 1e-12
    assert np.abs(grads.g_x - g @ layer.W).max() < 1e-12


@pytest.mark.parametrize("n_in,n_out", [(4, 4), (3, 3), (8, 8), (3, 5)])
def test_gradcheck(n_in, n_out):
    report = check_dense(n_in, n_out, seed=n_in)
    assert report.passed, report.lines()


def test_init_range():
    W = DenseLayer.init(16, 8, 0).W
    assert np.abs(W).max() <= 0.25 and W.shape == (8, 16)


def test_matches_materialized_spm(backend):
    spm = make_spm(12, 4, "general", seed=3, scheme="random")
    spm.bias[:] = np.linspace(-1, 1, 12)
    x = np.random.default_rng(3).normal(size=(5, 12))
    assert np.abs(from_spm(spm)(x) - spm(x)).max() < 1e-12


def test_float32_backends_close():
    from spmix import _backend
    layer = DenseLayer.init(33, 17, 0, np.float32)
    x = np.random.default_rng(0).normal(size=(9, 33)).astype(np.float32)
    ys = []
    for b in _backend.available():
        with _backend.use_backend(b):
            ys.append(layer(x))
    for y in ys[1:]:
        assert np.abs(y - ys[0]).max() < 1e-5


def test_shape_errors():
    with pytest.raises(UsageError):
        DenseLayer(np.ones(3))
    with pytest.raises(UsageError):
        DenseLayer(np.ones((2, 3)), np.ones(3))
    with pytest.raises(UsageError):
        DenseLayer.init(3, 2, 0)(np.ones((1, 2)))
