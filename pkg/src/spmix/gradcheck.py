"""Central finite-difference verification of every hand-written backward pass.

Error metric per parameter group: ``max|analytic - numeric| / max(max|analytic|,
max|numeric|, SCALE_FLOOR)``, i.e. the worst entry relative to the group's
scale. The floor only matters for groups whose true gradient is exactly zero
(attention key bias: softmax ignores a per-row constant), where the
difference quotient is pure round-off of order 1e-11.
All checks run in float64 with step 1e-5.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spmix import nn
from spmix.attention import AttentionLayer, attention_backward, attention_forward
from spmix.dense import DenseLayer, dense_backward, dense_forward
from spmix.gru import GruCell, gru_backward, gru_forward
from spmix.spm import make_spm, spm_backward, spm_forward
from spmix.tensor import Rng

STEP = 1e-5
TOL_SINGLE = 1e-6
TOL_COMPOSITE = 1e-5
SCALE_FLOOR = 1e-3


def numeric_grad(f, arr: np.ndarray, h: float = STEP) -> np.ndarray:
    """d f() / d arr by central differences, perturbing ``arr`` in place."""
    g = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), SCALE_FLOOR)
    return float(np.abs(analytic - numeric).max() / scale)


@dataclass
class GradCheckReport:
    name: str
    threshold: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e < self.threshold for e in self.errors.values())

    def lines(self) -> list[str]:
        out = []
        for group, err in self.errors.items():
            flag = "ok  " if err < self.threshold else "FAIL"
            out.append(f"{flag} {self.name:<32} {group:<14} max rel err {err:.3e} (< {self.threshold:g})")
        return out


def _label(kind, variant):
    return f"spm {variant}" if kind == "spm" else kind


def _probe(rng: Rng, shape):
    return rng.normal(shape)


def _quadratic_loss(y, R):
    # sum(R * y) + 0.25 * sum(y^2); gradient R + 0.5 y
    return float((R * y).sum() + 0.25 * (y * y).sum()), R + 0.5 * y


def _check_params(report, params, analytic, loss_fn, prefix=""):
    for name, p in params.items():
        report.errors[prefix + name] = rel_error(analytic[name], numeric_grad(loss_fn, p))


def check_spm(variant="rotation", n=8, L=3, residual="passthrough", schedule="auto",
              seed=0, batch=3, scheme="default") -> GradCheckReport:
    rng = Rng(seed).spawn("gradcheck-spm")
    layer = make_spm(n, L, variant, schedule, residual=residual, seed=seed, scheme=scheme)
    # move the diagonals and bias off their init values so every path is exercised
    layer.d_in[:] = rng.uniform(0.5, 1.5, n)
    layer.d_out[:] = rng.uniform(0.5, 1.5, n)
    layer.bias[:] = rng.normal(n, scale=0.1)
    if layer.residual is not None:
        layer.residual[:] = rng.uniform(0.5, 1.5, layer.L)
    x = _probe(rng, (batch, n))
    R = _probe(rng, (batch, n))

    def loss():
        return _quadratic_loss(spm_forward(layer, x)[0], R)[0]

    y, tape = spm_forward(layer, x)
    grads = spm_backward(layer, tape, _quadratic_loss(y, R)[1])
    report = GradCheckReport(f"spm {variant} n={n} L={L} {residual}", TOL_SINGLE)
    _check_params(report, layer.params(), grads.as_dict(), loss)
    report.errors["x"] = rel_error(grads.g_x, numeric_grad(loss, x))
    return report


def check_dense(n_in=4, n_out=4, seed=0, batch=3) -> GradCheckReport:
    rng = Rng(seed).spawn("gradcheck-dense")
    layer = DenseLayer.init(n_in, n_out, rng, np.float64)
    layer.bias[:] = rng.normal(n_out, scale=0.1)
    x = _probe(rng, (batch, n_in))
    R = _probe(rng, (batch, n_out))

    def loss():
        return _quadratic_loss(dense_forward(layer, x)[0], R)[0]

    y, tape = dense_forward(layer, x)
    grads = dense_backward(layer, tape, _quadratic_loss(y, R)[1])
    report = GradCheckReport(f"dense {n_in}->{n_out}", TOL_SINGLE)
    _check_params(report, layer.params(), grads.as_dict(), loss)
    report.errors["x"] = rel_error(grads.g_x, numeric_grad(loss, x))
    return report


def check_gru(n_x=5, n_h=6, T=5, kind="spm", variant="rotation", L=None, seed=0,
              batch=2, residual="passthrough") -> GradCheckReport:
    rng = Rng(seed).spawn("gradcheck-gru")
    cell = GruCell.create(n_x, n_h, kind, variant, L=L, residual=residual, seed=seed)
    for b in (cell.b_z, cell.b_r, cell.b_h):
        b[:] = rng.normal(n_h, scale=0.3)
    for m in cell.maps.values():
        inner = getattr(m, "inner", m)
        if hasattr(inner, "d_in"):
            inner.d_in[:] = rng.uniform(0.5, 1.5, inner.n)
            inner.d_out[:] = rng.uniform(0.5, 1.5, inner.n)
    xs = _probe(rng, (T, batch, n_x))
    h0 = _probe(rng, (batch, n_h)) * 0.5
    R = _probe(rng, (T, batch, n_h))

    def loss():
        return _quadratic_loss(gru_forward(cell, xs, h0)[0], R)[0]

    hs, tape = gru_forward(cell, xs, h0)
    grads, g_xs, g_h0 = gru_backward(cell, tape, _quadratic_loss(hs, R)[1])
    report = GradCheckReport(f"gru {_label(kind, variant)} T={T} {n_x}->{n_h}", TOL_COMPOSITE)
    _check_params(report, cell.params(), grads, loss)
    report.errors["x"] = rel_error(g_xs, numeric_grad(loss, xs))
    report.errors["h0"] = rel_error(g_h0, numeric_grad(loss, h0))
    return report


def check_attention(T=3, d=4, kind="spm", variant="rotation", L=None, seed=0,
                    d_h=None) -> GradCheckReport:
    rng = Rng(seed).spawn("gradcheck-attn")
    layer = AttentionLayer.create(d, kind, variant, L=L, seed=seed, d_h=d_h)
    for p in layer.proj.values():
        if hasattr(p, "d_in"):
            p.d_in[:] = rng.uniform(0.5, 1.5, d)
            p.bias[:] = rng.normal(d, scale=0.1)
    X = _probe(rng, (T, d))
    R = _probe(rng, (T, d))

    def loss():
        return _quadratic_loss(attention_forward(layer, X)[0], R)[0]

    Y, tape = attention_forward(layer, X)
    grads, G_X = attention_backward(layer, tape, _quadratic_loss(Y, R)[1])
    report = GradCheckReport(f"attention {_label(kind, variant)} T={T} d={d}", TOL_COMPOSITE)
    _check_params(report, layer.params(), grads, loss)
    report.errors["X"] = rel_error(G_X, numeric_grad(loss, X))
    return report


def check_nn(seed=0) -> GradCheckReport:
    rng = Rng(seed).spawn("gradcheck-nn")
    report = GradCheckReport("nn", TOL_SINGLE)

    S = _probe(rng, (3, 3))
    G = _probe(rng, (3, 3))
    A = nn.softmax_rows(S)
    report.errors["softmax"] = rel_error(nn.softmax_backward_rows(A, G),
                                         numeric_grad(lambda: float((nn.softmax_rows(S) * G).sum()), S))

    logits = _probe(rng, (5, 4))
    labels = rng.integers(4, 5)
    _, g = nn.cross_entropy_from_logits(logits, labels)
    report.errors["cross_entropy"] = rel_error(
        g, numeric_grad(lambda: nn.cross_entropy_from_logits(logits, labels)[0], logits))

    x = _probe(rng, (4, 5))
    x[np.abs(x) < 1e-3] = 0.5  # keep relu away from its kink
    G = _probe(rng, (4, 5))
    for name, fwd, bwd, uses_output in (
        ("relu", nn.relu, nn.relu_backward, False),
        ("tanh", nn.tanh, nn.tanh_backward, True),
        ("sigmoid", nn.sigmoid, nn.sigmoid_backward, True),
    ):
        out = fwd(x)
        analytic = bwd(out if uses_output else x, G)
        report.errors[name] = rel_error(analytic, numeric_grad(lambda: float((fwd(x) * G).sum()), x))
    return report


def run_suite(variant="rotation", n=8, L=3, schedule="auto", residual="passthrough",
              seed=0) -> list[GradCheckReport]:
    """Everything the ``gradcheck`` command covers for one set of flags."""
    n_h = max(n, 2)
    return [
        check_spm(variant, n, L, residual, schedule, seed),
        check_dense(n, n, seed),
        check_dense(max(n - 1, 1), n + 1, seed),
        check_nn(seed),
        check_gru(max(n - 1, 2), n_h, T=3, kind="spm", variant=variant, L=L, seed=seed, residual=residual),
        check_gru(max(n - 1, 2), n_h, T=3, kind="dense", seed=seed),
        check_attention(3, n, "spm", variant, L=L, seed=seed),
        check_attention(3, n, "dense", seed=seed),
    ]
