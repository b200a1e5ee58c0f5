"""Training loops and experiment drivers.

Every experiment runs a Dense arm or an SPM arm under one schedule: the
data stream, evaluation set and head initialization depend only on the
seed, never on the model kind. Step timings cover forward, backward and
the optimizer update; batch assembly and evaluation are outside the clock,
and the first ``WARMUP_STEPS`` steps are not timed.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from spmix import _backend
from spmix.bench import (MIN_MEASURED_STEPS, WARMUP_STEPS, BenchRecord, fit_loglog_slope,
                         median_of_means, time_steps)
from spmix.data import (VOCAB, LabeledData, builtin_text_corpus, corpus_from_bytes,
                        gen_teacher_dataset, load_byte_corpus, load_csv_classification,
                        make_teacher, sample_csv_path, sample_windows, split_data)
from spmix.dense import DenseLayer
from spmix.errors import UsageError
from spmix.nn import Optimizer, cross_entropy_from_logits, nll_to_bpc, prefixed, relu, relu_backward
from spmix.pairing import default_depth
from spmix.spm import make_spm
from spmix.tensor import Rng, resolve_dtype

RECORD_KEYS = ("step", "train_nll", "valid_nll", "valid_acc", "valid_bpc", "ms_per_step")


@dataclass
class TrainConfig:
    model: str = "spm"              # dense | spm
    variant: str = "rotation"       # rotation | general
    n: int = 64
    L: int | None = None            # None: ceil(log2 n)
    schedule: str = "auto"
    residual: str = "passthrough"
    steps: int = 1200
    batch: int = 256
    lr: float = 3e-3
    optimizer: str = "adam"
    seed: int = 0
    eval_every: int = 100
    precision: str = "float32"
    classes: int = 10
    train_size: int = 5000
    test_size: int = 1000
    T: int = 64
    eval_batches: int = 10
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.model not in ("dense", "spm"):
            raise UsageError(f"model must be dense or spm, got {self.model!r}")
        for name in ("n", "batch", "eval_every", "classes", "T", "eval_batches"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")
        if self.steps < 0:
            raise UsageError("steps must be >= 0")
        if self.n < 2:
            raise UsageError("n must be >= 2")
        resolve_dtype(self.precision)

    @property
    def depth(self) -> int:
        return default_depth(self.n) if self.L is None else self.L

    @property
    def dtype(self):
        return resolve_dtype(self.precision)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def teacher_config(**kw) -> TrainConfig:
    return TrainConfig(**{**dict(n=64, steps=1200, batch=256, classes=10, lr=1e-2), **kw})


def textclass_config(**kw) -> TrainConfig:
    return TrainConfig(**{**dict(n=256, L=12, steps=300, batch=32, classes=4, lr=3e-3,
                                 eval_every=50), **kw})


def charlm_config(**kw) -> TrainConfig:
    return TrainConfig(**{**dict(n=256, T=64, batch=32, steps=500, lr=1e-3, eval_every=100), **kw})


@dataclass
class RunRecord:
    config: dict
    experiment: str
    evals: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    model: object = field(default=None, repr=False, compare=False)

    def add(self, **metrics):
        self.evals.append({k: metrics[k] for k in RECORD_KEYS if metrics.get(k) is not None})

    @property
    def final(self) -> dict:
        return self.evals[-1] if self.evals else {}

    def series(self, key):
        return [e[key] for e in self.evals if key in e]

    def jsonl(self) -> str:
        return "".join(json.dumps(e) + "\n" for e in self.evals)

    def mean_ms_per_step(self) -> float | None:
        ms = self.series("ms_per_step")
        return float(np.mean(ms)) if ms else None


# -- models ----------------------------------------------------------------

def make_body(config: TrainConfig, n: int, seed: int):
    """The n -> n linear operator under test."""
    dt = config.dtype
    if config.model == "dense":
        return DenseLayer.init(n, n, Rng(seed).spawn("body"), dt)
    return make_spm(n, config.depth, config.variant, config.schedule, config.residual,
                    seed=seed, dtype=dt)


class Classifier:
    """x -> head(relu(body(x)))."""

    def __init__(self, body, head):
        self.body, self.head = body, head

    def params(self):
        return {**prefixed("body", self.body.params()), **prefixed("head", self.head.params())}

    def logits(self, X):
        u, _ = self.body.forward(X)
        return self.head.forward(relu(u))[0]

    def loss_and_grads(self, X, y):
        u, bt = self.body.forward(X)
        logits, ht = self.head.forward(relu(u))
        loss, g = cross_entropy_from_logits(logits, y)
        hg = self.head.backward(ht, g)
        bg = self.body.backward(bt, relu_backward(u, hg.g_x))
        return loss, {**prefixed("body", bg.as_dict()), **prefixed("head", hg.as_dict())}


class ByteLM:
    """byte -> embedding -> body -> relu -> head -> next-byte logits."""

    def __init__(self, embedding: np.ndarray, body, head):
        self.embedding, self.body, self.head = embedding, body, head

    def params(self):
        return {"embedding": self.embedding, **prefixed("body", self.body.params()),
                **prefixed("head", self.head.params())}

    def _forward(self, inputs):
        idx = inputs.reshape(-1)
        u, bt = self.body.forward(self.embedding[idx])
        logits, ht = self.head.forward(relu(u))
        return idx, u, bt, logits, ht

    def nll(self, inputs, targets) -> float:
        _, _, _, logits, _ = self._forward(inputs)
        return cross_entropy_from_logits(logits, targets.reshape(-1))[0]

    def loss_and_grads(self, inputs, targets):
        idx, u, bt, logits, ht = self._forward(inputs)
        loss, g = cross_entropy_from_logits(logits, targets.reshape(-1))
        hg = self.head.backward(ht, g)
        bg = self.body.backward(bt, relu_backward(u, hg.g_x))
        g_emb = np.zeros_like(self.embedding)
        np.add.at(g_emb, idx, bg.g_x)
        return loss, {"embedding": g_emb, **prefixed("body", bg.as_dict()),
                      **prefixed("head", hg.as_dict())}


# -- generic loop ----------------------------------------------------------

def _train(model, next_batch, evaluate, config: TrainConfig, record: RunRecord, log=None):
    opt = Optimizer(config.optimizer, config.lr)
    params = model.params()
    record.model = model
    record.add(step=0, **evaluate())
    if log:
        log(record.evals[-1])
    losses, times = [], []
    for step in range(1, config.steps + 1):
        batch = next_batch()
        t0 = time.perf_counter()
        loss, grads = model.loss_and_grads(*batch)
        opt.step(params, grads)
        elapsed = time.perf_counter() - t0
        losses.append(loss)
        if step > WARMUP_STEPS:
            times.append(elapsed * 1e3)
        if step % config.eval_every == 0 or step == config.steps:
            record.add(step=step, train_nll=float(np.mean(losses)),
                       ms_per_step=float(np.mean(times)) if times else None, **evaluate())
            if log:
                log(record.evals[-1])
            losses, times = [], []
    return record


def _epoch_batches(count: int, batch: int, rng: Rng):
    """Yield index batches from successive shuffled epochs."""
    perm, pos = rng.permutation(count), 0
    while True:
        if pos + batch > count:
            perm, pos = np.concatenate([perm[pos:], rng.permutation(count)]), 0
        yield perm[pos:pos + batch]
        pos += batch


def _classification_eval(model, test: LabeledData, dtype):
    X = test.X.astype(dtype)

    def evaluate():
        logits = model.logits(X)
        nll, _ = cross_entropy_from_logits(logits, test.y)
        return {"valid_nll": nll, "valid_acc": float(np.mean(np.argmax(logits, 1) == test.y))}

    return evaluate


def _run_classifier(config, train: LabeledData, test: LabeledData, classes: int, experiment, log):
    dt = config.dtype
    root = Rng(config.seed)
    body = make_body(config, train.X.shape[1], root.spawn("init").seed)
    head = DenseLayer.init(train.X.shape[1], classes, root.spawn("head"), dt)
    model = Classifier(body, head)
    Xtr = train.X.astype(dt)
    batches = _epoch_batches(len(train), min(config.batch, len(train)), root.spawn("batches"))

    def next_batch():
        idx = next(batches)
        return Xtr[idx], train.y[idx]

    record = RunRecord(config.to_dict(), experiment,
                       meta={"backend": _backend.name(), "threads": _backend.threads()})
    return _train(model, next_batch, _classification_eval(model, test, dt), config, record, log)


def run_teacher_experiment(config: TrainConfig, log=None) -> RunRecord:
    """Student (body -> relu -> dense head) fit to a frozen SPM teacher's hard labels."""
    root = Rng(config.seed)
    teacher = make_teacher(config.n, config.classes, config.depth, seed=root.spawn("teacher").seed)
    drng = root.spawn("data")
    Xtr, ytr = gen_teacher_dataset(teacher, config.train_size, drng.spawn("train"))
    Xte, yte = gen_teacher_dataset(teacher, config.test_size, drng.spawn("test"))
    record = _run_classifier(config, LabeledData(Xtr, ytr), LabeledData(Xte, yte),
                             config.classes, "teacher", log)
    record.meta.update(teacher_L=teacher.L, input_distribution="standard normal",
                       class_counts=np.bincount(ytr, minlength=config.classes).tolist())
    return record


def run_textclass_experiment(config: TrainConfig, train_path=None, test_path=None, log=None) -> RunRecord:
    """Hashed-feature text classification from ``label,text`` CSV files.

    Without ``test_path`` a seeded ``test_fraction`` of the training file is held out;
    without ``train_path`` the bundled sample corpus is used.
    """
    train = load_csv_classification(train_path or sample_csv_path(), config.n)
    if test_path is None:
        train, test = split_data(train, config.test_fraction, Rng(config.seed).spawn("split"))
    else:
        test = load_csv_classification(test_path, config.n, label_base=train.label_base)
    classes = max(train.num_classes, test.num_classes)
    record = _run_classifier(config, train, test, classes, "textclass", log)
    record.meta.update(hashing="signed fnv1a64, l2-normalized", label_base=train.label_base,
                       classes=classes, train_rows=len(train), test_rows=len(test))
    return record


def run_charlm_experiment(config: TrainConfig, corpus_path=None, log=None) -> RunRecord:
    """Next-byte prediction; reports NLL (nats) and bits per character."""
    if corpus_path is None:
        corpus = corpus_from_bytes(builtin_text_corpus())
    else:
        corpus = load_byte_corpus(corpus_path, min_length=2 * (config.T + 2))
    dt = config.dtype
    d = config.n
    root = Rng(config.seed)
    embedding = root.spawn("embedding").normal((VOCAB, d), scale=0.1).astype(dt)
    body = make_body(config, d, root.spawn("init").seed)
    head = DenseLayer.init(d, VOCAB, root.spawn("head"), dt)
    model = ByteLM(embedding, body, head)

    brng = root.spawn("batches")
    erng = root.spawn("eval")
    valid_windows = [sample_windows(corpus.valid, config.T, config.batch, erng)
                     for _ in range(config.eval_batches)]

    def next_batch():
        w = sample_windows(corpus.train, config.T, config.batch, brng)
        return w.inputs, w.targets

    def evaluate():
        nll = float(np.mean([model.nll(w.inputs, w.targets) for w in valid_windows]))
        return {"valid_nll": nll, "valid_bpc": nll_to_bpc(nll)}

    record = RunRecord(config.to_dict(), "charlm",
                       meta={"backend": _backend.name(), "threads": _backend.threads(),
                             "corpus_bytes": int(len(corpus.data)),
                             "train_bytes": int(len(corpus.train)),
                             "valid_bytes": int(len(corpus.valid))})
    return _train(model, next_batch, evaluate, config, record, log)


# -- timing sweep ----------------------------------------------------------

def timing_sweep(kinds=("dense", "spm"), widths=(256, 512, 1024, 2048), L_rule="log2",
                 steps: int = 30, batch: int = 256, variant: str = "rotation",
                 precision: str = "float32", seed: int = 0, backend: str | None = None,
                 warmup: int = WARMUP_STEPS) -> list[BenchRecord]:
    """ms per forward+backward+SGD step of a single n -> n layer at each width.

    ``L_rule`` is ``"log2"`` (ceil(log2 n)) or a fixed integer depth. Each
    kind's records carry the fitted log-log slope over the sweep.
    """
    widths = [int(w) for w in widths]
    if widths != sorted(widths):
        raise UsageError("widths must be sorted ascending")
    if steps < MIN_MEASURED_STEPS:
        raise UsageError(f"need at least {MIN_MEASURED_STEPS} measured steps")
    dt = resolve_dtype(precision)
    records = []
    ctx = _backend.use_backend(backend) if backend else _nullcontext()
    with ctx:
        for kind in kinds:
            kind_records = []
            for n in widths:
                L = default_depth(n) if L_rule == "log2" else int(L_rule)
                cfg = TrainConfig(model=kind, variant=variant, n=n, L=L, precision=precision)
                layer = make_body(cfg, n, seed)
                rng = Rng(seed).spawn(f"sweep-{n}")
                x = rng.normal((batch, n)).astype(dt)
                target = rng.normal((batch, n)).astype(dt)
                params = layer.params()
                opt = Optimizer("sgd", 1e-4)

                def step():
                    y, tape = layer.forward(x)
                    grads = layer.backward(tape, (y - target) / batch)
                    opt.step(params, grads.as_dict())

                samples = time_steps(step, steps, warmup)
                kind_records.append(BenchRecord(kind, n, L if kind == "spm" else None,
                                                median_of_means(samples), steps,
                                                _backend.name(), batch))
            if len(kind_records) >= 3:
                slope = fit_loglog_slope([(r.n, r.ms_per_step) for r in kind_records])
                kind_records = [replace(r, slope=slope) for r in kind_records]
            records.extend(kind_records)
    return records


class _nullcontext:
    def __enter__(self):
        return None

    def __exit__(self, *exc):
        return False


def chance_accuracy(y) -> float:
    return float(np.bincount(y).max() / len(y))
