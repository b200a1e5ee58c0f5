import json
import math

import numpy as np
import pytest

from spmix import harness
from spmix.errors import UsageError
from spmix.harness import (RECORD_KEYS, charlm_config, chance_accuracy, run_charlm_experiment,
                           run_teacher_experiment, run_textclass_experiment, teacher_config,
                           textclass_config, timing_sweep)


def strip_timing(evals):
    return [{k: v for k, v in e.items() if k != "ms_per_step"} for e in evals]


def test_untrained_teacher_near_chance():
    for seed in range(3):
        rec = run_teacher_experiment(teacher_config(steps=0, seed=seed, test_size=2000))
        acc = rec.final["valid_acc"]
        assert len(rec.evals) == 1 and abs(acc - 0.1) < 0.1


def test_short_teacher_run_learns():
    rec = run_teacher_experiment(teacher_config(steps=100, eval_every=50))
    accs = rec.series("valid_acc")
    assert accs[-1] > accs[0] + 0.2
    assert [e["step"] for e in rec.evals] == [0, 50, 100]


def test_both_arms_see_identical_batches(monkeypatch):
    seen = {"dense": [], "spm": []}
    real = harness.Classifier.loss_and_grads

    def spy(self, X, y):
        seen[self.body.kind].append((X.tobytes(), y.tobytes()))
        return real(self, X, y)

    monkeypatch.setattr(harness.Classifier, "loss_and_grads", spy)
    for model in ("dense", "spm"):
        run_teacher_experiment(teacher_config(model=model, steps=25, eval_every=25, train_size=300))
    assert len(seen["spm"]) == 25 and seen["spm"] == seen["dense"]


@pytest.mark.parametrize("runner,cfg", [
    (run_teacher_experiment, teacher_config(steps=30, eval_every=10, train_size=500, test_size=200)),
    (run_textclass_experiment, textclass_config(steps=20, eval_every=10)),
    (run_charlm_experiment, charlm_config(n=32, T=16, batch=4, steps=20, eval_every=10, eval_batches=2)),
])
def test_deterministic_float64_reruns(runner, cfg):
    from dataclasses import replace
    cfg = replace(cfg, precision="float64")
    a, b = runner(cfg), runner(cfg)
    assert strip_timing(a.evals) == strip_timing(b.evals)


def test_record_keys_and_jsonl():
    rec = run_teacher_experiment(teacher_config(steps=20, eval_every=10, train_size=300, test_size=100))
    for line in rec.jsonl().splitlines():
        row = json.loads(line)
        assert set(row) <= set(RECORD_KEYS) and "step" in row
    assert "ms_per_step" not in rec.evals[0] and "ms_per_step" in rec.evals[-1]
    assert "valid_bpc" not in rec.evals[-1]


def test_warmup_steps_excluded_from_timing():
    # with eval_every <= warmup, the first window has no timed steps at all
    rec = run_teacher_experiment(teacher_config(steps=20, eval_every=10, train_size=300, test_size=100))
    assert "ms_per_step" not in rec.evals[1]
    assert "ms_per_step" in rec.evals[2]


@pytest.mark.parametrize("model", ["dense", "spm"])
def test_textclass_beats_chance(model):
    rec = run_textclass_experiment(textclass_config(model=model, steps=300))
    assert rec.final["valid_acc"] > 0.25
    assert rec.meta["classes"] == 4 and rec.meta["label_base"] == 1


def test_textclass_uninformative_inputs(tmp_path):
    train = tmp_path / "train.csv"
    test = tmp_path / "test.csv"
    labels = [0] * 30 + [1] * 10 + [2] * 10
    train.write_text("".join(f"{k},\n" for k in labels), encoding="utf-8")
    test.write_text("".join(f"{k},\n" for k in labels[::2]), encoding="utf-8")
    rec = run_textclass_experiment(textclass_config(n=16, L=4, steps=100), train, test)
    # every input is the zero vector, so the best a model can do is the majority class
    assert rec.final["valid_acc"] == pytest.approx(chance_accuracy(np.array(labels[::2])))


def test_charlm_untrained_and_short_run(tmp_path):
    corpus = tmp_path / "tiny.txt"
    corpus.write_bytes(b"to be or not to be, that is the question. " * 200)
    for model in ("dense", "spm"):
        rec = run_charlm_experiment(charlm_config(model=model, n=128, steps=50, eval_every=25, batch=8,
                                                  T=32, eval_batches=3), corpus)
        nll = rec.series("valid_nll")
        assert abs(nll[0] - math.log(256)) < 0.05
        assert nll[-1] < nll[0] - 0.3
        assert rec.series("valid_bpc")[-1] == pytest.approx(nll[-1] / math.log(2))


def test_timing_sweep_small():
    records = timing_sweep(("dense", "spm"), (32, 64, 128), steps=20, batch=16, warmup=2)
    assert [(r.kind, r.n) for r in records] == [(k, n) for k in ("dense", "spm") for n in (32, 64, 128)]
    assert all(r.slope is not None and r.ms_per_step > 0 for r in records)
    assert [r.L for r in records if r.kind == "spm"] == [5, 6, 7]


def test_timing_sweep_rejects_bad_args():
    with pytest.raises(UsageError):
        timing_sweep(widths=(64, 32))
    with pytest.raises(UsageError):
        timing_sweep(widths=(32, 64), steps=5)


def test_config_validation():
    with pytest.raises(UsageError):
        teacher_config(model="cnn")
    with pytest.raises(UsageError):
        teacher_config(batch=0)
    with pytest.raises(UsageError):
        teacher_config(precision="half")
    assert teacher_config().depth == 6 and textclass_config().depth == 12
