import csv
import math

import numpy as np
import pytest

from spmix.data import (ByteCorpus, TeacherSpec, builtin_text_corpus, corpus_from_bytes,
                        gen_teacher_dataset, hash_features, load_byte_corpus, load_csv_classification,
                        make_teacher, sample_csv_path, sample_windows, split_data, tokenize)
from spmix.errors import DataError
from spmix.spm import make_spm
from spmix.tensor import Rng, fnv1a64


def test_identity_teacher_collapses():
    n, C = 8, 3
    W2 = np.zeros((C, n))
    W2[np.arange(C), np.arange(C)] = 2.0
    spec = TeacherSpec(n, 3, C, make_spm(n, 3, scheme="identity"), W2, 0)
    X = np.random.default_rng(0).normal(size=(200, n))
    assert np.array_equal(spec.labels(X), np.argmax(np.maximum(X[:, :C], 0), axis=1))


def test_teacher_dataset_deterministic_and_covers_classes():
    spec = make_teacher(64, 10, seed=3)
    X1, y1 = gen_teacher_dataset(spec, 10_000, Rng(1))
    X2, y2 = gen_teacher_dataset(make_teacher(64, 10, seed=3), 10_000, Rng(1))
    assert X1.tobytes() == X2.tobytes() and y1.tobytes() == y2.tobytes()
    assert set(np.unique(y1)) == set(range(10))
    assert spec.L == 6


def test_teacher_frozen():
    spec = make_teacher(16, 4, seed=0)
    with pytest.raises(ValueError):
        spec.W2[0, 0] = 1.0
    with pytest.raises(ValueError):
        spec.spm.blocks[0, 0, 0] = 1.0


def test_tokenize():
    assert tokenize("Hello, WORLD_wide  web's 42!") == ["hello", "world", "wide", "web", "s", "42"]


def test_hash_features_examples():
    assert not hash_features("", 16).any()
    assert np.array_equal(hash_features("a b c", 16), hash_features("a b c", 16))
    v = hash_features("the the", 16)
    nz = np.flatnonzero(v)
    assert len(nz) == 1 and abs(v[nz[0]]) == 1.0


def test_hash_features_signed_bucket_oracle():
    n = 10
    v = hash_features("alpha beta", n)
    want = np.zeros(n)
    for tok in ("alpha", "beta"):
        h = fnv1a64(tok.encode())
        want[h % n] += -1.0 if h >= 2**63 else 1.0
    want /= np.linalg.norm(want)
    assert np.array_equal(v, want)


def test_hash_norms():
    for text in ("one two three", "repeat repeat other", "x"):
        assert abs(np.linalg.norm(hash_features(text, 32)) - 1) < 1e-15


def test_csv_two_rows(tmp_path):
    p = tmp_path / "two.csv"
    p.write_text('0,"first text"\n1,second,with comma\n', encoding="utf-8")
    d = load_csv_classification(p, 16)
    assert len(d) == 2 and d.X.shape == (2, 16) and list(d.y) == [0, 1]
    assert np.array_equal(d.X[1], hash_features("second with comma", 16))


def test_csv_one_based_labels(tmp_path):
    p = tmp_path / "lab.csv"
    p.write_text("".join(f"{k},text {k}\n" for k in (1, 2, 3, 4, 2)), encoding="utf-8")
    d = load_csv_classification(p, 8)
    assert sorted(set(d.y.tolist())) == [0, 1, 2, 3] and d.label_base == 1


def test_csv_errors(tmp_path):
    with pytest.raises(DataError):
        load_csv_classification(tmp_path / "missing.csv", 8)
    bad = tmp_path / "bad.csv"
    bad.write_text("1,ok\nx,bad\n", encoding="utf-8")
    with pytest.raises(DataError, match="row 2"):
        load_csv_classification(bad, 8)
    empty = tmp_path / "empty.csv"
    empty.write_text("\n", encoding="utf-8")
    with pytest.raises(DataError):
        load_csv_classification(empty, 8)


def test_bundled_sample_corpus():
    with open(sample_csv_path(), newline="", encoding="utf-8") as fh:
        labels = [int(row[0]) for row in csv.reader(fh) if row]
    assert len(labels) == 200 and sorted(set(labels)) == [1, 2, 3, 4]
    d = load_csv_classification(sample_csv_path(), 64)
    assert d.num_classes == 4 and len(d) == 200


def test_split_data():
    d = load_csv_classification(sample_csv_path(), 32)
    tr, te = split_data(d, 0.25, Rng(0))
    assert len(tr) == 150 and len(te) == 50


def test_byte_windows_shift_by_one():
    corpus = corpus_from_bytes(b"abc" * 200)
    w = sample_windows(corpus.train, 3, 16, Rng(42))
    assert np.array_equal(w.targets[:, :-1], w.inputs[:, 1:])
    region = corpus.train
    for s, inp, tgt in zip(w.starts, w.inputs, w.targets):
        assert np.array_equal(inp, region[s:s + 3]) and np.array_equal(tgt, region[s + 1:s + 4])


def test_window_sampling_reproducible():
    corpus = corpus_from_bytes(bytes(range(256)) * 8)
    a = sample_windows(corpus.train, 10, 5, Rng(42))
    b = sample_windows(corpus.train, 10, 5, Rng(42))
    assert np.array_equal(a.starts, b.starts)


def test_split_ratio(tmp_path):
    p = tmp_path / "c.bin"
    p.write_bytes(bytes(1000))
    c = load_byte_corpus(p)
    assert isinstance(c, ByteCorpus) and len(c.train) == 900 and len(c.valid) == 100


def test_corpus_too_short(tmp_path):
    p = tmp_path / "tiny.txt"
    p.write_bytes(b"ab")
    with pytest.raises(DataError):
        load_byte_corpus(p, min_length=10)
    with pytest.raises(DataError):
        sample_windows(np.frombuffer(b"abcd", np.uint8), 3, 1, Rng(0))


def test_builtin_corpus_size():
    raw = builtin_text_corpus()
    assert len(raw) >= 100_000
    counts = np.bincount(np.frombuffer(raw, np.uint8), minlength=256)
    p = counts[counts > 0] / counts.sum()
    entropy_bits = -(p * np.log2(p)).sum()
    assert entropy_bits < math.log2(256)
