"""Activations, softmax, cross entropy and optimizers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from spmix.errors import UsageError

LN2 = math.log(2.0)


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, g):
    """Gradient through relu given its *input* ``x``."""
    return np.where(x > 0, g, 0).astype(g.dtype, copy=False)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(s, g):
    """Gradient through sigmoid given its *output* ``s``."""
    return g * s * (1 - s)


def tanh(x):
    return np.tanh(x)


def tanh_backward(h, g):
    """Gradient through tanh given its *output* ``h``."""
    return g * (1 - h * h)


def softmax_rows(S):
    S = np.asarray(S)
    e = np.exp(S - S.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward_rows(A, G_A):
    """(G_S)_i = A_i (G_A,i - sum_j A_j G_A,j), row by row, no Jacobian.

    G_A is first shifted by its own first column. The result is unchanged
    in exact arithmetic, and a row-constant G_A now gives exactly zero even
    when the row of A does not sum to 1 in floating point.
    """
    G = G_A - G_A[..., :1]
    return A * (G - (A * G).sum(axis=-1, keepdims=True))


def log_softmax_rows(S):
    m = S.max(axis=-1, keepdims=True)
    return S - m - np.log(np.exp(S - m).sum(axis=-1, keepdims=True))


def cross_entropy_from_logits(logits, labels):
    """Mean negative log-likelihood (nats) and its gradient w.r.t. the logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise UsageError(f"logits {logits.shape} and labels {labels.shape} do not match")
    C = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise UsageError(f"label out of range [0, {C})")
    B = logits.shape[0]
    rows = np.arange(B)
    logp = log_softmax_rows(logits)
    loss = float(-logp[rows, labels].astype(np.float64).mean())
    g = np.exp(logp)
    g[rows, labels] -= 1
    g /= B
    return loss, g


def nll_to_bpc(nll: float) -> float:
    return nll / LN2


@dataclass
class Optimizer:
    """SGD or Adam over named parameter arrays, updated in place.

    Moments are keyed by parameter name and created on first use.
    """

    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise UsageError(f"optimizer must be sgd or adam, got {self.kind!r}")

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        if params.keys() != grads.keys():
            raise UsageError(f"parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
        for name, p in params.items():
            if p.shape != grads[name].shape:
                raise UsageError(f"{name}: parameter {p.shape} vs gradient {grads[name].shape}")
        self.step_count += 1
        if self.kind == "sgd":
            for name, p in params.items():
                p -= self.lr * grads[name]
            return
        t = self.step_count
        c1 = 1 - self.beta1 ** t
        c2 = 1 - self.beta2 ** t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            p -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def optimizer_step(state: Optimizer, params, grads):
    state.step(params, grads)
    return params


def prefixed(prefix: str, d: dict) -> dict:
    return {f"{prefix}.{k}": v for k, v in d.items()}
