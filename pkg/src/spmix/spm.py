"""Stagewise pairwise mixer layer: y = D_out (B_L ... B_1) D_in x + b.

Each stage B_l applies an independent 2x2 block to every pair of its
pairing set. Blocks are either planar rotations (one angle per pair) or
unconstrained 2x2 matrices (a, b, c, d). Forward keeps every intermediate
z_0..z_L on a tape; backward walks the stages in reverse using the
closed-form per-pair gradients, summing parameter gradients over the batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spmix import _backend
from spmix.errors import NumericError, UsageError
from spmix.pairing import PairingSchedule, PairSet, make_schedule, validate
from spmix.tensor import Rng, as_batch, resolve_dtype

VARIANTS = ("rotation", "general")
BLOCK_SIZE = {"rotation": 1, "general": 4}
MATERIALIZE_CAP = 4096


# -- per-pair primitives ---------------------------------------------------

def rotation_block_forward(theta, x1, x2):
    c, s = np.cos(theta), np.sin(theta)
    return c * x1 - s * x2, s * x1 + c * x2


def rotation_block_backward(theta, x1, x2, d1, d2):
    """Return (gx1, gx2, gtheta) for upstream gradients (d1, d2)."""
    c, s = np.cos(theta), np.sin(theta)
    gx1 = c * d1 + s * d2
    gx2 = -s * d1 + c * d2
    gtheta = d1 * (-s * x1 - c * x2) + d2 * (c * x1 - s * x2)
    return gx1, gx2, gtheta


def general_block_forward(a, b, c, d, x1, x2):
    return a * x1 + b * x2, c * x1 + d * x2


def general_block_backward(a, b, c, d, x1, x2, d1, d2):
    """Return (gx1, gx2, ga, gb, gc, gd)."""
    return a * d1 + c * d2, b * d1 + d * d2, d1 * x1, d1 * x2, d2 * x1, d2 * x2


# -- layer -----------------------------------------------------------------

@dataclass
class Stage:
    pair_set: PairSet
    blocks: np.ndarray               # (pairs, 1) angles or (pairs, 4) coefficients
    residual_scale: float | None


@dataclass
class SpmTape:
    layer: "SpmLayer"
    x: np.ndarray
    zs: np.ndarray                   # (L+1, B, n); zs[l] is z_l

    @property
    def z(self) -> list[np.ndarray]:
        return list(self.zs)


@dataclass
class SpmGrads:
    g_d_in: np.ndarray
    g_d_out: np.ndarray
    g_bias: np.ndarray
    g_blocks: np.ndarray
    g_residual: np.ndarray | None
    g_x: np.ndarray
    trainable_bias: bool = True

    def as_dict(self) -> dict[str, np.ndarray]:
        out = {"d_in": self.g_d_in, "d_out": self.g_d_out}
        if self.trainable_bias:
            out["bias"] = self.g_bias
        out["blocks"] = self.g_blocks
        if self.g_residual is not None:
            out["residual"] = self.g_residual
        return out


class SpmLayer:
    """Square SPM operator of width ``n``.

    Constructed as the identity map; use :func:`init_params` (or
    :func:`make_spm`) to draw parameters. ``trainable_bias=False`` pins the
    bias at zero and hides it from :meth:`params`, for hosts (the GRU) that
    carry their own biases.
    """

    kind = "spm"

    def __init__(self, schedule: PairingSchedule, variant: str = "rotation",
                 dtype=np.float64, trainable_bias: bool = True):
        if variant not in VARIANTS:
            raise UsageError(f"variant must be one of {VARIANTS}, got {variant!r}")
        problems = validate(schedule)
        if problems:
            raise UsageError("invalid pairing schedule: " + "; ".join(problems[:5]))
        self.schedule = schedule
        self.variant = variant
        self.dtype = resolve_dtype(dtype)
        self.trainable_bias = trainable_bias
        n, L, P, k = schedule.n, schedule.depth, schedule.n // 2, BLOCK_SIZE[variant]
        self.d_in = np.ones(n, self.dtype)
        self.d_out = np.ones(n, self.dtype)
        self.bias = np.zeros(n, self.dtype)
        self.blocks = np.zeros((L, P, k), self.dtype)
        if variant == "general":
            self.blocks[..., 0] = 1
            self.blocks[..., 3] = 1
        self.residual = np.ones(L, self.dtype) if self.learned_residual else None

    def __repr__(self):
        return (f"SpmLayer(n={self.n}, L={self.L}, variant={self.variant!r}, "
                f"schedule={self.schedule.kind!r}, dtype={self.dtype.name})")

    @property
    def n(self) -> int:
        return self.schedule.n

    n_in = n_out = n

    @property
    def L(self) -> int:
        return self.schedule.depth

    @property
    def learned_residual(self) -> bool:
        return self.schedule.residual_policy == "learned_scale" and self.n % 2 == 1

    @property
    def stages(self) -> list[Stage]:
        return [Stage(ps, self.blocks[l], None if self.residual is None else float(self.residual[l]))
                for l, ps in enumerate(self.schedule.stages)]

    def params(self) -> dict[str, np.ndarray]:
        out = {"d_in": self.d_in, "d_out": self.d_out}
        if self.trainable_bias:
            out["bias"] = self.bias
        out["blocks"] = self.blocks
        if self.residual is not None:
            out["residual"] = self.residual
        return out

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params().values())

    def coefficients(self) -> np.ndarray:
        """(L, P, 4) block matrices [[a, b], [c, d]] for either variant."""
        if self.variant == "general":
            return np.ascontiguousarray(self.blocks)
        theta = self.blocks[..., 0]
        c, s = np.cos(theta), np.sin(theta)
        return np.ascontiguousarray(np.stack([c, -s, s, c], axis=-1), dtype=self.dtype)

    def residual_scales(self) -> np.ndarray:
        if self.residual is not None:
            return self.residual
        return np.ones(self.L, self.dtype)

    def astype(self, dtype) -> "SpmLayer":
        out = SpmLayer(self.schedule, self.variant, dtype, self.trainable_bias)
        for name, p in self.params().items():
            getattr(out, name)[...] = p
        return out

    def copy(self) -> "SpmLayer":
        return self.astype(self.dtype)

    def forward(self, x):
        return spm_forward(self, x)

    def backward(self, tape, g_y):
        return spm_backward(self, tape, g_y)

    def __call__(self, x):
        return spm_forward(self, x)[0]


def _check_finite(a, what):
    if not np.isfinite(a).all():
        raise NumericError(f"non-finite values in {what}")


def spm_forward(layer: SpmLayer, x) -> tuple[np.ndarray, SpmTape]:
    """Apply the layer to a ``(B, n)`` batch; returns ``(y, tape)``."""
    x = as_batch(x, layer.n, layer.dtype)
    _check_finite(x, "SPM input")
    lo, hi, un = layer.schedule.arrays()
    zs = np.empty((layer.L + 1,) + x.shape, layer.dtype)
    np.multiply(x, layer.d_in, out=zs[0])
    _backend.impl().stages_forward(zs, lo, hi, layer.coefficients(), un,
                                   layer.residual_scales(), _backend.threads())
    y = layer.d_out * zs[-1] + layer.bias
    return y, SpmTape(layer, x, zs)


def _sum_rows(a, dtype):
    return a.sum(axis=0, dtype=np.float64).astype(dtype)


def spm_backward(layer: SpmLayer, tape: SpmTape, g_y) -> SpmGrads:
    """Exact gradients for every parameter and the input, summed over the batch."""
    if tape.layer is not layer or tape.zs.shape[0] != layer.L + 1:
        raise UsageError("tape was not produced by this layer")
    g_y = as_batch(g_y, layer.n, layer.dtype, "g_y")
    if g_y.shape[0] != tape.x.shape[0]:
        raise UsageError(f"g_y batch {g_y.shape[0]} != tape batch {tape.x.shape[0]}")
    dt = layer.dtype
    g_bias = _sum_rows(g_y, dt)
    g_d_out = _sum_rows(g_y * tape.zs[-1], dt)
    g = np.ascontiguousarray(g_y * layer.d_out)
    lo, hi, un = layer.schedule.arrays()
    g_blocks, g_res = _backend.impl().stages_backward(
        tape.zs, g, lo, hi, layer.coefficients(), un, layer.residual_scales(),
        layer.variant == "rotation", _backend.threads())
    g_d_in = _sum_rows(g * tape.x, dt)
    g_x = g * layer.d_in
    return SpmGrads(g_d_in, g_d_out, g_bias, g_blocks,
                    g_res if layer.learned_residual else None, g_x, layer.trainable_bias)


def materialize(layer: SpmLayer, cap: int = MATERIALIZE_CAP) -> np.ndarray:
    """Explicit n x n matrix D_out (prod B_l) D_in, bias excluded."""
    if layer.n > cap:
        raise UsageError(f"n={layer.n} exceeds the materialization cap {cap}")
    y, _ = spm_forward(layer, np.eye(layer.n, dtype=layer.dtype))
    # row j of y is W e_j + b, i.e. column j of W plus bias
    return np.ascontiguousarray((y - layer.bias).T)


def init_params(layer: SpmLayer, rng: Rng | int, scheme: str = "default") -> SpmLayer:
    """Fill ``layer``'s parameters in place and return it.

    ``default``: angles ~ U(-pi/4, pi/4), or a = d = 1 + e, b = c = e with
    independent e ~ U(-0.05, 0.05); unit diagonals, zero bias.
    ``identity``: the exact identity operator.
    ``random``: angles ~ U(-pi, pi), or block entries ~ N(0, 1/2); used for teachers.
    """
    if not isinstance(rng, Rng):
        rng = Rng(int(rng))
    L, P, k = layer.blocks.shape
    layer.d_in[:] = 1
    layer.d_out[:] = 1
    layer.bias[:] = 0
    if layer.residual is not None:
        layer.residual[:] = 1
    if scheme == "identity":
        layer.blocks[:] = 0
        if layer.variant == "general":
            layer.blocks[..., 0] = layer.blocks[..., 3] = 1
    elif scheme == "default":
        if layer.variant == "rotation":
            layer.blocks[..., 0] = rng.uniform(-np.pi / 4, np.pi / 4, (L, P))
        else:
            eps = rng.uniform(-0.05, 0.05, (L, P, 4))
            layer.blocks[:] = eps + np.array([1.0, 0.0, 0.0, 1.0])
    elif scheme == "random":
        if layer.variant == "rotation":
            layer.blocks[..., 0] = rng.uniform(-np.pi, np.pi, (L, P))
        else:
            layer.blocks[:] = rng.normal((L, P, 4), scale=np.sqrt(0.5))
    else:
        raise UsageError(f"unknown init scheme {scheme!r}")
    return layer


def make_spm(n: int, L: int | None = None, variant: str = "rotation", schedule: str = "auto",
             residual: str = "passthrough", seed: int = 0, scheme: str = "default",
             dtype=np.float64, trainable_bias: bool = True) -> SpmLayer:
    """Convenience constructor: schedule + layer + initialization from one seed."""
    residual = {"learned": "learned_scale"}.get(residual, residual)
    sched = make_schedule(n, L, schedule, seed=seed, residual_policy=residual)
    layer = SpmLayer(sched, variant, dtype, trainable_bias)
    return init_params(layer, Rng(seed).spawn("init"), scheme)


class RectSpm:
    """SPM between different widths: zero-pad the input to max(n_in, n_out),
    apply a square layer, keep the first n_out outputs."""

    kind = "spm"

    def __init__(self, n_in: int, n_out: int, inner: SpmLayer):
        if inner.n != max(n_in, n_out):
            raise UsageError(f"inner width {inner.n} != max({n_in}, {n_out})")
        self.n_in, self.n_out, self.inner = n_in, n_out, inner

    def __repr__(self):
        return f"RectSpm({self.n_in}->{self.n_out}, {self.inner!r})"

    @property
    def dtype(self):
        return self.inner.dtype

    def params(self):
        return self.inner.params()

    @property
    def num_params(self):
        return self.inner.num_params

    def forward(self, x):
        x = as_batch(x, self.n_in, self.dtype)
        xp = np.zeros((x.shape[0], self.inner.n), self.dtype)
        xp[:, :self.n_in] = x
        y, tape = spm_forward(self.inner, xp)
        return np.ascontiguousarray(y[:, :self.n_out]), tape

    def backward(self, tape, g_y):
        g_y = as_batch(g_y, self.n_out, self.dtype, "g_y")
        gp = np.zeros((g_y.shape[0], self.inner.n), self.dtype)
        gp[:, :self.n_out] = g_y
        grads = spm_backward(self.inner, tape, gp)
        grads.g_x = np.ascontiguousarray(grads.g_x[:, :self.n_in])
        return grads

    def __call__(self, x):
        return self.forward(x)[0]

    def materialize(self):
        return materialize(self.inner)[:self.n_out, :self.n_in]


def make_spm_map(n_in: int, n_out: int, **kwargs):
    """Square :class:`SpmLayer` when widths match, else a padded :class:`RectSpm`."""
    if n_in == n_out:
        return make_spm(n_in, **kwargs)
    return RectSpm(n_in, n_out, make_spm(max(n_in, n_out), **kwargs))
