"""GRU whose six affine maps are dense or SPM layers, with full BPTT.

    z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
    r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
    h~_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
    h_t = (1 - z_t) * h_{t-1} + z_t * h~_t

Inner maps carry no bias of their own; b_z, b_r, b_h are the only biases.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spmix.dense import DenseLayer
from spmix.errors import UsageError
from spmix.nn import prefixed, sigmoid, sigmoid_backward, tanh, tanh_backward
from spmix.spm import make_spm_map
from spmix.tensor import Rng, resolve_dtype

MAP_NAMES = ("W_z", "U_z", "W_r", "U_r", "W_h", "U_h")


class GruCell:
    def __init__(self, maps: dict, b_z, b_r, b_h):
        missing = set(MAP_NAMES) - set(maps)
        if missing:
            raise UsageError(f"missing GRU maps: {sorted(missing)}")
        self.maps = {k: maps[k] for k in MAP_NAMES}
        self.n_x = self.maps["W_z"].n_in
        self.n_h = self.maps["U_z"].n_out
        for k, m in self.maps.items():
            want = (self.n_x if k.startswith("W") else self.n_h, self.n_h)
            if (m.n_in, m.n_out) != want:
                raise UsageError(f"map {k} is {m.n_in}->{m.n_out}, expected {want[0]}->{want[1]}")
        self.dtype = self.maps["W_z"].dtype
        self.b_z = np.array(b_z, self.dtype)
        self.b_r = np.array(b_r, self.dtype)
        self.b_h = np.array(b_h, self.dtype)

    @classmethod
    def create(cls, n_x: int, n_h: int, kind: str = "spm", variant: str = "rotation",
               L: int | None = None, schedule: str = "auto", residual: str = "passthrough",
               seed: int = 0, dtype=np.float64, scheme: str = "default"):
        dtype = resolve_dtype(dtype)
        rng = Rng(seed)
        maps = {}
        for k in MAP_NAMES:
            n_in = n_x if k.startswith("W") else n_h
            if kind == "dense":
                maps[k] = DenseLayer.init(n_in, n_h, rng.spawn(k), dtype, trainable_bias=False)
            elif kind == "spm":
                maps[k] = make_spm_map(n_in, n_h, L=L, variant=variant, schedule=schedule,
                                       residual=residual, seed=rng.spawn(k).seed, scheme=scheme,
                                       dtype=dtype, trainable_bias=False)
            else:
                raise UsageError(f"map kind must be dense or spm, got {kind!r}")
        zeros = np.zeros(n_h)
        return cls(maps, zeros, zeros, zeros)

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for k, m in self.maps.items():
            out.update(prefixed(k, m.params()))
        out.update(b_z=self.b_z, b_r=self.b_r, b_h=self.b_h)
        return out


@dataclass
class GruStep:
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    h_cand: np.ndarray
    s: np.ndarray
    q: np.ndarray
    a: np.ndarray
    tapes: dict = field(default_factory=dict)


@dataclass
class GruTape:
    cell: GruCell
    steps: list[GruStep]


def gru_forward(cell: GruCell, xs, h0):
    """Run the cell over ``xs`` of shape (T, B, n_x) from ``h0`` (B, n_h).

    Returns hidden states (T, B, n_h) and the tape.
    """
    xs = np.asarray(xs, dtype=cell.dtype)
    h = np.asarray(h0, dtype=cell.dtype)
    if xs.ndim != 3 or xs.shape[2] != cell.n_x:
        raise UsageError(f"xs must be (T, B, {cell.n_x}), got {xs.shape}")
    if h.shape != (xs.shape[1], cell.n_h):
        raise UsageError(f"h0 must be ({xs.shape[1]}, {cell.n_h}), got {h.shape}")
    M = cell.maps
    steps, hs = [], []
    for x in xs:
        tapes = {}

        def apply(name, v):
            y, tapes[name] = M[name].forward(v)
            return y

        s = apply("W_z", x) + apply("U_z", h) + cell.b_z
        q = apply("W_r", x) + apply("U_r", h) + cell.b_r
        z, r = sigmoid(s), sigmoid(q)
        a = apply("W_h", x) + apply("U_h", r * h) + cell.b_h
        h_cand = tanh(a)
        steps.append(GruStep(x, h, z, r, h_cand, s, q, a, tapes))
        h = (1 - z) * h + z * h_cand
        hs.append(h)
    return np.stack(hs), GruTape(cell, steps)


def gru_backward(cell: GruCell, tape: GruTape, g_hs):
    """Backpropagation through time.

    ``g_hs[t]`` is the loss gradient arriving directly at h_t. Returns
    ``(grads, g_xs, g_h0)`` with ``grads`` keyed like :meth:`GruCell.params`.
    """
    if tape.cell is not cell:
        raise UsageError("tape was not produced by this cell")
    g_hs = np.asarray(g_hs, dtype=cell.dtype)
    if g_hs.shape[0] != len(tape.steps):
        raise UsageError(f"g_hs has {g_hs.shape[0]} steps, tape has {len(tape.steps)}")
    M = cell.maps
    grads = {k: np.zeros_like(v) for k, v in cell.params().items()}
    g_xs = np.zeros((len(tape.steps),) + tape.steps[0].x.shape, cell.dtype)
    carry = np.zeros_like(tape.steps[0].h_prev)

    def through(name, st, g):
        res = M[name].backward(st.tapes[name], g)
        for k, v in res.as_dict().items():
            grads[f"{name}.{k}"] += v
        return res.g_x

    for t in range(len(tape.steps) - 1, -1, -1):
        st = tape.steps[t]
        g_h = g_hs[t] + carry
        g_z = g_h * (st.h_cand - st.h_prev)
        g_cand = g_h * st.z
        g_prev = g_h * (1 - st.z)

        g_a = tanh_backward(st.h_cand, g_cand)
        g_rh = through("U_h", st, g_a)
        g_r = g_rh * st.h_prev
        g_prev += g_rh * st.r
        g_x = through("W_h", st, g_a)

        g_s = sigmoid_backward(st.z, g_z)
        g_q = sigmoid_backward(st.r, g_r)
        g_x += through("W_z", st, g_s) + through("W_r", st, g_q)
        g_prev += through("U_z", st, g_s) + through("U_r", st, g_q)

        grads["b_z"] += g_s.sum(axis=0)
        grads["b_r"] += g_q.sum(axis=0)
        grads["b_h"] += g_a.sum(axis=0)
        g_xs[t] = g_x
        carry = g_prev
    return grads, g_xs, carry
