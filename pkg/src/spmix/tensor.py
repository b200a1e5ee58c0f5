"""Numeric plumbing shared by every module.

Vectors, matrices and batches are plain C-contiguous numpy arrays in
row-major layout: a batch of ``B`` vectors of width ``n`` is a ``(B, n)``
array. Two precisions are used: ``float32`` for training and timing and
``float64`` for gradient verification.

Randomness comes from :class:`Rng`, a splitmix64 stream. It is used instead
of ``numpy.random`` so that streams are bit-identical across numpy versions
and platforms.
"""
from __future__ import annotations

import numpy as np

from spmix.errors import UsageError

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

COMPUTE = np.float32
VERIFY = np.float64

_PRECISIONS = {
    "float32": np.float32, "f32": np.float32, "32": np.float32, "compute": np.float32,
    "float64": np.float64, "f64": np.float64, "64": np.float64, "verify": np.float64,
}


def resolve_dtype(precision) -> np.dtype:
    """Map a precision tag (``"float32"``, ``"f64"``, a dtype, ...) to a numpy dtype."""
    if isinstance(precision, str):
        try:
            return np.dtype(_PRECISIONS[precision.lower()])
        except KeyError:
            raise UsageError(f"unknown precision {precision!r}; use float32 or float64") from None
    dt = np.dtype(precision)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise UsageError(f"unsupported dtype {dt}; use float32 or float64")
    return dt


def precision_tag(dtype) -> str:
    return np.dtype(dtype).name


def _mix64(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64, which is what splitmix64 needs
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & _MASK
    return h


class Rng:
    """Deterministic splitmix64 generator.

    The k-th output is ``mix(seed + k * GAMMA)``, so whole blocks of draws
    are produced with vectorized uint64 arithmetic.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK
        self.state = self.seed

    def __repr__(self):
        return f"Rng(seed={self.seed}, state={self.state:#x})"

    def next_u64(self, size: int = 1) -> np.ndarray:
        size = int(size)
        offsets = np.arange(1, size + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        out = _mix64(np.uint64(self.state) + offsets)
        self.state = (self.state + size * _GAMMA) & _MASK
        return out

    def random(self, size=None):
        """Uniform draws in [0, 1) with 53 random bits each."""
        count = 1 if size is None else int(np.prod(size))
        u = (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return float(u[0]) if size is None else u.reshape(size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def normal(self, size=None, scale: float = 1.0):
        """Standard normal draws (Box-Muller), optionally scaled."""
        count = 1 if size is None else int(np.prod(size))
        half = (count + 1) // 2
        u1 = self.random(half)
        u2 = self.random(half)
        r = np.sqrt(-2.0 * np.log1p(-u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:count]
        z = z * scale
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, high: int, size=None):
        """Integers uniform on ``[0, high)``."""
        if high < 1:
            raise UsageError("integers() needs high >= 1")
        u = self.random(1 if size is None else size)
        k = np.minimum(np.floor(u * high).astype(np.int64), high - 1)
        return int(k.reshape(-1)[0]) if size is None else k

    def permutation(self, n: int) -> np.ndarray:
        # argsort of 53-bit keys: ties have probability ~n^2 / 2^54
        return np.argsort(self.random(n), kind="stable").astype(np.int64)

    def spawn(self, tag: str) -> "Rng":
        """Independent child stream keyed by ``tag``; does not advance this one."""
        key = np.array([self.seed ^ fnv1a64(tag.encode())], dtype=np.uint64)
        return Rng(int(_mix64(key)[0]))


def splitmix_next(rng: Rng) -> float:
    """Advance ``rng`` by one step and return a float in [0, 1)."""
    return rng.random()


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    v = np.asarray(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise UsageError(f"matvec shape mismatch: {m.shape} x {v.shape}")
    return m @ v


def as_batch(x, n: int, dtype, name: str = "x") -> np.ndarray:
    """Validate a ``(B, n)`` batch and return it C-contiguous in ``dtype``."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != n:
        raise UsageError(f"{name} must have shape (batch, {n}), got {x.shape}")
    return np.ascontiguousarray(x, dtype=dtype)
