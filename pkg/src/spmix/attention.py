"""Single-head scaled dot-product attention with dense or SPM projections.

No masking: every position attends to every position of its sequence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spmix.dense import DenseLayer
from spmix.errors import UsageError
from spmix.nn import prefixed, softmax_backward_rows, softmax_rows
from spmix.spm import make_spm
from spmix.tensor import Rng, resolve_dtype

PROJ_NAMES = ("Q", "K", "V", "O")


class AttentionLayer:
    def __init__(self, proj_Q, proj_K, proj_V, proj_O, d_h: int | None = None):
        self.proj = {"Q": proj_Q, "K": proj_K, "V": proj_V, "O": proj_O}
        self.d = proj_Q.n_in
        for k, p in self.proj.items():
            if (p.n_in, p.n_out) != (self.d, self.d):
                raise UsageError(f"projection {k} is {p.n_in}->{p.n_out}, expected square {self.d}")
        self.d_h = self.d if d_h is None else int(d_h)
        if self.d_h < 1:
            raise UsageError("d_h must be >= 1")
        self.dtype = proj_Q.dtype

    @classmethod
    def create(cls, d: int, kind: str = "spm", variant: str = "rotation", L: int | None = None,
               schedule: str = "auto", seed: int = 0, dtype=np.float64, d_h: int | None = None,
               scheme: str = "default"):
        dtype = resolve_dtype(dtype)
        rng = Rng(seed)
        projs = []
        for k in PROJ_NAMES:
            if kind == "dense":
                projs.append(DenseLayer.init(d, d, rng.spawn(k), dtype))
            elif kind == "spm":
                projs.append(make_spm(d, L, variant, schedule, seed=rng.spawn(k).seed,
                                      scheme=scheme, dtype=dtype))
            else:
                raise UsageError(f"projection kind must be dense or spm, got {kind!r}")
        return cls(*projs, d_h=d_h)

    def params(self):
        out = {}
        for k, p in self.proj.items():
            out.update(prefixed(k, p.params()))
        return out


@dataclass
class AttentionTape:
    layer: AttentionLayer
    X: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    S: np.ndarray
    A: np.ndarray
    H: np.ndarray
    tapes: dict


def _rows(a):
    return a.reshape(-1, a.shape[-1])


def attention_forward(layer: AttentionLayer, X):
    """X is (T, d) or (B, T, d); returns Y of the same shape and the tape."""
    X = np.asarray(X, dtype=layer.dtype)
    if X.ndim not in (2, 3) or X.shape[-1] != layer.d:
        raise UsageError(f"X must be (T, {layer.d}) or (B, T, {layer.d}), got {X.shape}")
    tapes = {}
    out = {}
    for k in ("Q", "K", "V"):
        y, tapes[k] = layer.proj[k].forward(_rows(X))
        out[k] = y.reshape(X.shape)
    Q, K, V = out["Q"], out["K"], out["V"]
    S = Q @ np.swapaxes(K, -1, -2) / np.sqrt(layer.d_h)
    A = softmax_rows(S)
    H = A @ V
    Y, tapes["O"] = layer.proj["O"].forward(_rows(H))
    return Y.reshape(X.shape), AttentionTape(layer, X, Q, K, V, S, A, H, tapes)


def attention_backward(layer: AttentionLayer, tape: AttentionTape, G_Y):
    """Returns ``(grads, G_X)``; grads keyed like :meth:`AttentionLayer.params`."""
    if tape.layer is not layer:
        raise UsageError("tape was not produced by this layer")
    G_Y = np.asarray(G_Y, dtype=layer.dtype)
    if G_Y.shape != tape.X.shape:
        raise UsageError(f"G_Y shape {G_Y.shape} != {tape.X.shape}")
    grads = {}

    def through(k, g):
        res = layer.proj[k].backward(tape.tapes[k], _rows(g))
        grads.update(prefixed(k, res.as_dict()))
        return res.g_x.reshape(tape.X.shape)

    G_H = through("O", G_Y)
    G_A = G_H @ np.swapaxes(tape.V, -1, -2)
    G_V = np.swapaxes(tape.A, -1, -2) @ G_H
    G_S = softmax_backward_rows(tape.A, G_A)
    scale = 1.0 / np.sqrt(layer.d_h)
    G_Q = scale * (G_S @ tape.K)
    G_K = scale * (np.swapaxes(G_S, -1, -2) @ tape.Q)
    G_X = through("Q", G_Q) + through("K", G_K) + through("V", G_V)
    return {k: grads[k] for k in layer.params()}, G_X
