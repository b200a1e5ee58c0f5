"""Per-stage pairing sets: which coordinates each mixing stage couples."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spmix.errors import UsageError
from spmix.tensor import Rng

RESIDUAL_POLICIES = ("passthrough", "learned_scale")


@dataclass(frozen=True)
class PairSet:
    pairs: tuple[tuple[int, int], ...]
    unpaired: int | None = None

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class PairingSchedule:
    n: int
    stages: tuple[PairSet, ...]
    residual_policy: str = "passthrough"
    kind: str = "custom"
    seed: int | None = None
    _arrays: dict = field(default=None, init=False, repr=False, compare=False)

    @property
    def depth(self) -> int:
        return len(self.stages)

    def arrays(self):
        """Return ``(lo, hi, unpaired)`` int32 arrays of shapes (L, n//2), (L, n//2), (L,).

        Unpaired entries are -1 for stages without a singleton.
        """
        if self._arrays is None:
            L, P = self.depth, self.n // 2
            lo = np.empty((L, P), dtype=np.int32)
            hi = np.empty((L, P), dtype=np.int32)
            un = np.full(L, -1, dtype=np.int32)
            for s, st in enumerate(self.stages):
                if len(st.pairs) != P:
                    raise UsageError(f"stage {s + 1} has {len(st.pairs)} pairs, expected {P}")
                for p, (i, j) in enumerate(st.pairs):
                    lo[s, p], hi[s, p] = i, j
                if st.unpaired is not None:
                    un[s] = st.unpaired
            for a in (lo, hi, un):
                a.setflags(write=False)
            object.__setattr__(self, "_arrays", {"lo": lo, "hi": hi, "unpaired": un})
        a = self._arrays
        return a["lo"], a["hi"], a["unpaired"]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kind": self.kind,
            "seed": self.seed,
            "residual_policy": self.residual_policy,
            "stages": [
                {"pairs": [list(p) for p in st.pairs], "unpaired": st.unpaired}
                for st in self.stages
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairingSchedule":
        stages = tuple(
            PairSet(tuple((int(i), int(j)) for i, j in st["pairs"]),
                    None if st["unpaired"] is None else int(st["unpaired"]))
            for st in d["stages"]
        )
        return cls(int(d["n"]), stages, d.get("residual_policy", "passthrough"),
                   d.get("kind", "custom"), d.get("seed"))


def _check_policy(policy: str) -> str:
    if policy not in RESIDUAL_POLICIES:
        raise UsageError(f"residual policy must be one of {RESIDUAL_POLICIES}, got {policy!r}")
    return policy


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def butterfly_schedule(n: int, L: int, residual_policy: str = "passthrough") -> PairingSchedule:
    """Stage l (1-based) pairs i with i XOR 2**((l-1) mod log2 n).

    Depths beyond log2 n cycle through the strides again.
    """
    if not is_power_of_two(n) or n < 2:
        raise UsageError(f"butterfly_schedule needs a power-of-two n >= 2, got {n}; "
                         "use random_schedule for other widths")
    if L < 1:
        raise UsageError("L must be >= 1")
    _check_policy(residual_policy)
    log_n = n.bit_length() - 1
    stages = []
    for ell in range(L):
        stride = 1 << (ell % log_n)
        pairs = tuple((i, i ^ stride) for i in range(n) if not i & stride)
        stages.append(PairSet(pairs))
    return PairingSchedule(n, tuple(stages), residual_policy, kind="butterfly")


def random_schedule(n: int, L: int, rng: Rng | int, residual_policy: str = "passthrough") -> PairingSchedule:
    """Independent uniformly random matching per stage.

    For odd ``n`` the last index of each shuffled order stays unpaired.
    """
    if n < 2:
        raise UsageError(f"random_schedule needs n >= 2, got {n}")
    if L < 1:
        raise UsageError("L must be >= 1")
    _check_policy(residual_policy)
    seed = None
    if not isinstance(rng, Rng):
        seed = int(rng)
        rng = Rng(seed)
    stages = []
    for _ in range(L):
        perm = rng.permutation(n)
        pairs = sorted((min(a, b), max(a, b)) for a, b in zip(perm[0:n - 1:2].tolist(), perm[1::2].tolist()))
        unpaired = int(perm[-1]) if n % 2 else None
        stages.append(PairSet(tuple(pairs), unpaired))
    return PairingSchedule(n, tuple(stages), residual_policy, kind="random", seed=seed)


def round_robin_schedule(n: int, L: int, residual_policy: str = "passthrough") -> PairingSchedule:
    """Circle-method tournament rounds; any n >= 2, cycling after n-1 (or n) rounds."""
    if n < 2:
        raise UsageError(f"round_robin_schedule needs n >= 2, got {n}")
    if L < 1:
        raise UsageError("L must be >= 1")
    _check_policy(residual_policy)
    m = n + (n % 2)  # phantom player m-1 when n is odd
    rounds = m - 1
    stages = []
    for ell in range(L):
        r = ell % rounds
        order = [m - 1] + [(r + k) % (m - 1) for k in range(m - 1)]
        pairs, unpaired = [], None
        for k in range(m // 2):
            a, b = order[k], order[m - 1 - k]
            if a >= n or b >= n:
                unpaired = b if a >= n else a
                continue
            pairs.append((min(a, b), max(a, b)))
        stages.append(PairSet(tuple(sorted(pairs)), unpaired))
    return PairingSchedule(n, tuple(stages), residual_policy, kind="round_robin")


def validate(schedule: PairingSchedule) -> list[str]:
    """Return every disjointness/coverage violation; an empty list means valid."""
    problems = []
    n = schedule.n
    if schedule.residual_policy not in RESIDUAL_POLICIES:
        problems.append(f"unknown residual policy {schedule.residual_policy!r}")
    if not schedule.stages:
        problems.append("schedule has no stages")
    for s, st in enumerate(schedule.stages, start=1):
        seen: dict[int, int] = {}
        for i, j in st.pairs:
            if not (0 <= i < j < n):
                problems.append(f"stage {s}: pair ({i}, {j}) is not 0 <= lo < hi < {n}")
            for idx in (i, j):
                seen[idx] = seen.get(idx, 0) + 1
        if st.unpaired is not None:
            if not 0 <= st.unpaired < n:
                problems.append(f"stage {s}: unpaired index {st.unpaired} out of range")
            seen[st.unpaired] = seen.get(st.unpaired, 0) + 1
            if n % 2 == 0:
                problems.append(f"stage {s}: unpaired index given but n={n} is even")
        elif n % 2 == 1:
            problems.append(f"stage {s}: n={n} is odd but no unpaired index is recorded")
        for idx in sorted(k for k, c in seen.items() if c > 1):
            problems.append(f"stage {s}: index {idx} repeated")
        for idx in range(n):
            if idx not in seen:
                problems.append(f"stage {s}: index {idx} uncovered")
        if len(st.pairs) != n // 2:
            problems.append(f"stage {s}: {len(st.pairs)} pairs, expected {n // 2}")
    return problems


def default_depth(n: int) -> int:
    """ceil(log2 n), the depth at which a butterfly reaches every coordinate."""
    if n < 2:
        raise UsageError(f"default_depth needs n >= 2, got {n}")
    return (n - 1).bit_length()


def make_schedule(n: int, L: int | None = None, kind: str = "auto", seed: int = 0,
                  residual_policy: str = "passthrough") -> PairingSchedule:
    """Build a schedule by name: auto (butterfly for powers of two, else random),
    butterfly, random or round_robin."""
    L = default_depth(n) if L is None else L
    if kind == "auto":
        kind = "butterfly" if is_power_of_two(n) and n >= 2 else "random"
    if kind == "butterfly":
        return butterfly_schedule(n, L, residual_policy)
    if kind == "random":
        return random_schedule(n, L, Rng(seed).spawn("schedule"), residual_policy)
    if kind in ("round_robin", "roundrobin"):
        return round_robin_schedule(n, L, residual_policy)
    raise UsageError(f"unknown schedule kind {kind!r}")


def connected(schedule: PairingSchedule) -> bool:
    """True if the union of all stages' pairs links every coordinate (union-find)."""
    parent = list(range(schedule.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for st in schedule.stages:
        for i, j in st.pairs:
            parent[find(i)] = find(j)
    return len({find(i) for i in range(schedule.n)}) == 1


__all__ = [
    "PairSet", "PairingSchedule", "butterfly_schedule", "random_schedule",
    "round_robin_schedule", "validate", "default_depth", "make_schedule", "connected",
    "is_power_of_two", "RESIDUAL_POLICIES",
]
