"""Dense affine baseline, y = W x + b, with exact backward."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spmix import _backend
from spmix.errors import UsageError
from spmix.tensor import Rng, as_batch, resolve_dtype


@dataclass
class DenseTape:
    layer: "DenseLayer"
    x: np.ndarray


@dataclass
class DenseGrads:
    g_W: np.ndarray
    g_bias: np.ndarray
    g_x: np.ndarray
    trainable_bias: bool = True

    def as_dict(self):
        if self.trainable_bias:
            return {"W": self.g_W, "bias": self.g_bias}
        return {"W": self.g_W}


class DenseLayer:
    kind = "dense"

    def __init__(self, W, bias=None, dtype=None, trainable_bias: bool = True):
        W = np.asarray(W)
        if W.ndim != 2:
            raise UsageError(f"W must be 2-D, got shape {W.shape}")
        self.dtype = resolve_dtype(dtype if dtype is not None else
                                   (W.dtype if W.dtype in (np.float32, np.float64) else np.float64))
        self.W = np.array(W, dtype=self.dtype, order="C")
        if bias is None:
            bias = np.zeros(W.shape[0])
        self.bias = np.array(bias, dtype=self.dtype)
        if self.bias.shape != (W.shape[0],):
            raise UsageError(f"bias shape {self.bias.shape} != ({W.shape[0]},)")
        self.trainable_bias = trainable_bias

    def __repr__(self):
        return f"DenseLayer({self.n_in}->{self.n_out}, dtype={self.dtype.name})"

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: Rng | int, dtype=np.float64, trainable_bias=True):
        """W ~ U(-1/sqrt(n_in), 1/sqrt(n_in)), zero bias."""
        if not isinstance(rng, Rng):
            rng = Rng(int(rng))
        bound = 1.0 / np.sqrt(n_in)
        return cls(rng.uniform(-bound, bound, (n_out, n_in)), np.zeros(n_out), dtype, trainable_bias)

    @property
    def n_in(self):
        return self.W.shape[1]

    @property
    def n_out(self):
        return self.W.shape[0]

    def params(self):
        if self.trainable_bias:
            return {"W": self.W, "bias": self.bias}
        return {"W": self.W}

    @property
    def num_params(self):
        return sum(p.size for p in self.params().values())

    def astype(self, dtype):
        return DenseLayer(self.W, self.bias, dtype, self.trainable_bias)

    def forward(self, x):
        return dense_forward(self, x)

    def backward(self, tape, g_y):
        return dense_backward(self, tape, g_y)

    def __call__(self, x):
        return dense_forward(self, x)[0]


def dense_forward(layer: DenseLayer, x):
    x = as_batch(x, layer.n_in, layer.dtype)
    y = _backend.impl().dense_forward(x, layer.W, layer.bias, _backend.threads())
    return y, DenseTape(layer, x)


def dense_backward(layer: DenseLayer, tape: DenseTape, g_y) -> DenseGrads:
    if tape.layer is not layer:
        raise UsageError("tape was not produced by this layer")
    g_y = as_batch(g_y, layer.n_out, layer.dtype, "g_y")
    if g_y.shape[0] != tape.x.shape[0]:
        raise UsageError(f"g_y batch {g_y.shape[0]} != tape batch {tape.x.shape[0]}")
    g_W, g_b, g_x = _backend.impl().dense_backward(tape.x, layer.W, g_y, _backend.threads())
    return DenseGrads(g_W, g_b, g_x, layer.trainable_bias)


def from_spm(spm_layer) -> DenseLayer:
    """Dense layer computing exactly what ``spm_layer`` computes (via materialization)."""
    from spmix.spm import materialize
    return DenseLayer(materialize(spm_layer), spm_layer.bias, spm_layer.dtype)
