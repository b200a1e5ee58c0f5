"""Timing, log-log slope fitting and closed-form cost/parameter counts."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from spmix.errors import UsageError
from spmix.pairing import default_depth
from spmix.spm import BLOCK_SIZE

WARMUP_STEPS = 10
MIN_MEASURED_STEPS = 20


@dataclass
class BenchRecord:
    kind: str
    n: int
    L: int | None
    ms_per_step: float
    steps: int
    backend: str
    batch: int
    slope: float | None = None

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CostModel:
    """Per-example scalar operation and parameter counts for one layer."""

    flops_forward: int
    flops_backward: int
    param_count: int

    @classmethod
    def spm(cls, n: int, L: int | None = None, variant: str = "rotation",
            residual: str = "passthrough", trainable_bias: bool = True) -> "CostModel":
        L = default_depth(n) if L is None else L
        P = n // 2
        k = BLOCK_SIZE[variant]
        learned = residual in ("learned", "learned_scale") and n % 2 == 1
        # forward: D_in, 4 mul + 2 add per pair, optional residual scale, D_out, bias
        fwd = 3 * n + 6 * L * P + (L if learned else 0)
        # backward: bias/D_out grads and g_zL, transpose mix (6/pair) plus block grads
        # (rotation: 6 mul + 3 add + 1 acc; general: 4 mul + 4 acc), D_in grads and g_x
        per_pair = 6 + (10 if variant == "rotation" else 8)
        bwd = 3 * n + L * per_pair * P + (3 * L if learned else 0) + 3 * n
        params = (3 if trainable_bias else 2) * n + L * P * k + (L if learned else 0)
        return cls(fwd, bwd, params)

    @classmethod
    def dense(cls, n_in: int, n_out: int | None = None, trainable_bias: bool = True) -> "CostModel":
        n_out = n_in if n_out is None else n_out
        return cls(2 * n_in * n_out + n_out, 4 * n_in * n_out + n_out,
                   n_in * n_out + (n_out if trainable_bias else 0))


def count_params(layer=None, *, kind: str = "spm", n: int | None = None, L: int | None = None,
                 variant: str = "rotation", residual: str = "passthrough",
                 n_out: int | None = None) -> int:
    """Closed-form trainable-scalar count, from a layer object or a description.

    SPM: 3n + L * floor(n/2) * k (+1 per stage for a learned odd residual),
    k = 1 for rotation blocks, 4 for general blocks. Dense: n_in * n_out + n_out.
    """
    if layer is not None:
        if getattr(layer, "kind", None) == "spm" and hasattr(layer, "inner"):
            layer = layer.inner
        if layer.kind == "spm":
            return CostModel.spm(layer.n, layer.L, layer.variant, layer.schedule.residual_policy,
                                 layer.trainable_bias).param_count
        return CostModel.dense(layer.n_in, layer.n_out, layer.trainable_bias).param_count
    if n is None:
        raise UsageError("count_params needs a layer or n")
    if kind == "spm":
        return CostModel.spm(n, L, variant, residual).param_count
    if kind == "dense":
        return CostModel.dense(n, n_out).param_count
    raise UsageError(f"unknown layer kind {kind!r}")


def fit_loglog_slope(points) -> float:
    """Least-squares slope of log(ms) against log(n)."""
    pts = [(float(n), float(ms)) for n, ms in points]
    if len(pts) < 3:
        raise UsageError(f"need at least 3 points to fit a slope, got {len(pts)}")
    ns = np.array([p[0] for p in pts])
    if np.any(np.diff(ns) <= 0):
        raise UsageError("n values must be strictly increasing")
    ms = np.array([p[1] for p in pts])
    if np.any(ns <= 0) or np.any(ms <= 0):
        raise UsageError("log-log fit needs positive n and timings")
    slope, _ = np.polyfit(np.log(ns), np.log(ms), 1)
    return float(slope)


def median_of_means(samples, groups: int = 5) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    groups = max(1, min(groups, len(samples)))
    return float(np.median([chunk.mean() for chunk in np.array_split(samples, groups)]))


def time_steps(step, steps: int, warmup: int = WARMUP_STEPS) -> list[float]:
    """Run ``step()`` warmup + steps times; return the measured durations in ms."""
    for _ in range(warmup):
        step()
    out = []
    for _ in range(steps):
        t0 = time.perf_counter()
        step()
        out.append((time.perf_counter() - t0) * 1e3)
    return out


def speedups(dense: list[BenchRecord], spm: list[BenchRecord]) -> list[tuple[int, float]]:
    by_n = {r.n: r for r in spm}
    return [(d.n, d.ms_per_step / by_n[d.n].ms_per_step) for d in dense if d.n in by_n]
