"""Datasets: synthetic compositional teacher, hashed text features, byte corpora."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from spmix.errors import DataError, UsageError
from spmix.nn import relu
from spmix.pairing import default_depth
from spmix.spm import SpmLayer, make_spm, spm_forward
from spmix.tensor import Rng, fnv1a64

SAMPLE_CSV = "sample_news.csv"


# -- compositional teacher -------------------------------------------------

@dataclass(frozen=True)
class TeacherSpec:
    n: int
    L: int
    classes: int
    spm: SpmLayer
    W2: np.ndarray          # (classes, n)
    seed: int

    def labels(self, X: np.ndarray) -> np.ndarray:
        h = relu(spm_forward(self.spm, X)[0])
        # argmax returns the first maximum, so ties go to the lowest class index
        return np.argmax(h @ self.W2.T, axis=1)


def make_teacher(n: int, classes: int, L: int | None = None, seed: int = 0,
                 variant: str = "rotation", schedule: str = "auto") -> TeacherSpec:
    """Teacher x -> W2 relu(SPM(x)) with fully random rotation angles and W2 ~ N(0, 1/n)."""
    L = default_depth(n) if L is None else L
    rng = Rng(seed).spawn("teacher")
    spm = make_spm(n, L, variant, schedule, seed=rng.spawn("spm").seed, scheme="random")
    W2 = rng.spawn("head").normal((classes, n), scale=1.0 / np.sqrt(n))
    spm.blocks.setflags(write=False)
    W2.setflags(write=False)
    return TeacherSpec(n, L, classes, spm, W2, seed)


def gen_teacher_dataset(spec: TeacherSpec, count: int, rng: Rng | int):
    """Draw ``count`` standard-normal inputs and label them with the teacher."""
    if not isinstance(rng, Rng):
        rng = Rng(int(rng))
    X = rng.normal((count, spec.n))
    return X, spec.labels(X)


# -- hashed text features --------------------------------------------------

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN.findall(text.lower())


def hash_features(text: str, n: int) -> np.ndarray:
    """Signed feature hashing with FNV-1a 64, then L2 normalization.

    bucket = hash mod n; sign is -1 when bit 63 of the hash is set.
    """
    if n < 2:
        raise UsageError(f"need at least 2 buckets, got {n}")
    v = np.zeros(n, dtype=np.float64)
    for tok in tokenize(text):
        h = fnv1a64(tok.encode("utf-8"))
        v[h % n] += -1.0 if h >> 63 else 1.0
    norm = np.linalg.norm(v)
    if norm > 0:
        v /= norm
    return v


@dataclass
class LabeledData:
    X: np.ndarray
    y: np.ndarray
    label_base: int = 0

    def __len__(self):
        return len(self.y)

    @property
    def num_classes(self) -> int:
        return int(self.y.max()) + 1 if len(self.y) else 0


def load_csv_classification(path, n_buckets: int, label_base: int | None = None) -> LabeledData:
    """Read ``label,text...`` rows into hashed feature vectors.

    Labels may be 0- or 1-based. With ``label_base=None`` the base is 1 when
    the smallest label in the file is 1 or more, else 0. Pass the base
    detected on a training file when loading its test split.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    labels, texts = [], []
    for lineno, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            labels.append(int(row[0].strip()))
        except ValueError:
            raise DataError(f"{path}: row {lineno}: label {row[0]!r} is not an integer") from None
        texts.append(" ".join(row[1:]))
    if not labels:
        raise DataError(f"{path}: no rows")
    if label_base is None:
        label_base = 1 if min(labels) >= 1 else 0
    y = np.array(labels, dtype=np.int64) - label_base
    if y.min() < 0:
        bad = int(np.argmin(y))
        raise DataError(f"{path}: label {labels[bad]} is below the label base {label_base}")
    X = np.stack([hash_features(t, n_buckets) for t in texts])
    return LabeledData(X, y, label_base)


def sample_csv_path() -> Path:
    """Path of the bundled 4-class sample corpus."""
    return Path(str(resources.files("spmix") / "data" / SAMPLE_CSV))


def split_data(data: LabeledData, test_fraction: float, rng: Rng) -> tuple[LabeledData, LabeledData]:
    perm = rng.permutation(len(data))
    k = int(round(len(data) * (1 - test_fraction)))
    tr, te = perm[:k], perm[k:]
    return (LabeledData(data.X[tr], data.y[tr], data.label_base),
            LabeledData(data.X[te], data.y[te], data.label_base))


# -- byte corpora ----------------------------------------------------------

VOCAB = 256


@dataclass(frozen=True)
class ByteCorpus:
    data: np.ndarray        # uint8
    split: int              # first index of the validation region

    @property
    def train(self) -> np.ndarray:
        return self.data[:self.split]

    @property
    def valid(self) -> np.ndarray:
        return self.data[self.split:]


@dataclass
class ByteWindow:
    inputs: np.ndarray      # (batch, T) int64 byte values
    targets: np.ndarray     # (batch, T); targets[:, i] = region[start + i + 1]
    starts: np.ndarray


def corpus_from_bytes(raw: bytes, train_fraction: float = 0.9) -> ByteCorpus:
    data = np.frombuffer(bytes(raw), dtype=np.uint8)
    return ByteCorpus(data, int(len(data) * train_fraction))


def load_byte_corpus(path, min_length: int = 2, train_fraction: float = 0.9) -> ByteCorpus:
    """Read a file verbatim; first 90% trains, last 10% validates."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(raw) < min_length:
        raise DataError(f"{path}: corpus has {len(raw)} bytes, need at least {min_length}")
    return corpus_from_bytes(raw, train_fraction)


def sample_windows(region: np.ndarray, T: int, batch: int, rng: Rng) -> ByteWindow:
    """Uniformly placed windows of T inputs and their next-byte targets."""
    if len(region) <= T + 1:
        raise DataError(f"corpus region of {len(region)} bytes is too short for T={T}")
    starts = rng.integers(len(region) - T, batch)
    idx = starts[:, None] + np.arange(T)[None, :]
    return ByteWindow(region[idx].astype(np.int64), region[idx + 1].astype(np.int64), starts)


def builtin_text_corpus(min_bytes: int = 100_000) -> bytes:
    """English prose that ships with every CPython: the pydoc topic help texts."""
    from pydoc_data import topics

    parts, total = [], 0
    for key in sorted(topics.topics):
        text = topics.topics[key].encode("utf-8")
        parts.append(text)
        total += len(text)
    out = b"\n".join(parts)
    if len(out) < min_bytes:
        raise DataError(f"builtin corpus only has {len(out)} bytes")
    return out
