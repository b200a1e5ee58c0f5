"""``spmix`` command line.

Exit codes: 0 success, 1 a check failed, 2 usage error, 3 data or I/O error.
Options come from (highest first) command-line flags, a ``--config`` file of
``key = value`` lines named like the flags, then built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from spmix import _backend, checkpoint, harness
from spmix.bench import speedups
from spmix.errors import DataError, NumericError, UsageError
from spmix.gradcheck import TOL_SINGLE, run_suite
from spmix.pairing import default_depth
from spmix.spm import MATERIALIZE_CAP, RectSpm, make_spm, materialize
from spmix.tensor import Rng, resolve_dtype

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _csv_ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_words(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _depth(text):
    if text in ("auto", "log2", "none", "None"):
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"L must be an integer or 'auto', got {text!r}") from None


def _default_seed():
    raw = os.environ.get("SPM_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SPM_SEED must be an integer, got {raw!r}") from None


def _common(seed_default) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=seed_default,
                   help="master seed (default: $SPM_SEED or 0)")
    g.add_argument("--threads", type=int, default=None, help="cap on kernel threads")
    g.add_argument("--deterministic", action="store_true",
                   help="single-threaded kernels; combine with --precision float64 for bit-identical reruns")
    g.add_argument("--config", default=None, help="file of 'key = value' lines named like the flags")
    g.add_argument("--precision", default=None,
                   help="float32 or float64 (default: float32 for training and bench, float64 for checks)")
    g.add_argument("--backend", default=None, choices=["compiled", "python"],
                   help="kernel backend (default: compiled when built)")
    return p


def _layer_flags(p, n=8, L=3, variant="rotation"):
    p.add_argument("--variant", default=variant, choices=["rotation", "general"], help="block type")
    p.add_argument("--n", type=int, default=n, help="layer width")
    p.add_argument("--L", type=_depth, default=L, help="stage depth ('auto' = ceil(log2 n))")
    p.add_argument("--schedule", default="auto", choices=["auto", "butterfly", "random", "round_robin"],
                   help="pairing schedule")
    p.add_argument("--residual", default="passthrough", choices=["passthrough", "learned"],
                   help="treatment of the unpaired index when n is odd")


def _train_flags(p, **defaults):
    cfg = harness.TrainConfig(**defaults)
    p.add_argument("--model", default="spm", choices=["dense", "spm"], help="linear operator under test")
    p.add_argument("--variant", default=cfg.variant, choices=["rotation", "general"], help="SPM block type")
    p.add_argument("--L", type=_depth, default=cfg.L, help="SPM stage depth ('auto' = ceil(log2 n))")
    p.add_argument("--schedule", default="auto", choices=["auto", "butterfly", "random", "round_robin"],
                   help="SPM pairing schedule")
    p.add_argument("--residual", default="passthrough", choices=["passthrough", "learned"],
                   help="unpaired-index treatment for odd n")
    p.add_argument("--steps", type=int, default=cfg.steps, help="training steps")
    p.add_argument("--batch", type=int, default=cfg.batch, help="batch size")
    p.add_argument("--lr", type=float, default=cfg.lr, help="learning rate")
    p.add_argument("--optimizer", default=cfg.optimizer, choices=["adam", "sgd"], help="update rule")
    p.add_argument("--eval-every", type=int, default=cfg.eval_every, help="steps between evaluations")
    p.add_argument("--out", default=None, help="write eval records here as JSON lines")
    p.add_argument("--save", default=None, help="write a checkpoint of the trained operator here")


def build_parser() -> argparse.ArgumentParser:
    common = _common(_default_seed())
    parser = _Parser(prog="spmix", description="Stagewise pairwise mixing layers: checks, benchmarks, experiments.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference check of every backward pass",
                       description="Central differences in float64 over SPM, dense, activations, "
                                   "GRU and attention; exit 1 if any group misses its tolerance.")
    _layer_flags(p)

    p = sub.add_parser("materialize", parents=[common], help="dense matrix of a layer plus residual checks",
                       description="Build the n x n matrix of a layer (from --checkpoint or fresh flags), "
                                   "report forward-equivalence and orthogonality residuals.")
    _layer_flags(p)
    p.add_argument("--checkpoint", default=None, help="load the layer from this checkpoint")
    p.add_argument("--init", default="default", choices=["default", "identity", "random"],
                   help="parameter init for a fresh layer")
    p.add_argument("--cap", type=int, default=MATERIALIZE_CAP, help="largest n allowed")
    p.add_argument("--out", default=None, help="write the matrix here as text (default: stdout if n <= 16)")
    p.add_argument("--save", default=None, help="write the fresh layer as a checkpoint")

    p = sub.add_parser("bench", parents=[common], help="ms/step sweep over widths with log-log slopes",
                       description="Time forward+backward+update of one n x n layer per width.")
    p.add_argument("--widths", type=_csv_ints, default=[256, 512, 1024, 2048], help="comma-separated widths")
    p.add_argument("--kinds", type=_csv_words, default=["dense", "spm"], help="comma-separated: dense,spm")
    p.add_argument("--steps", type=int, default=30, help="measured steps per width (>= 20)")
    p.add_argument("--warmup", type=int, default=10, help="untimed warmup steps")
    p.add_argument("--batch", type=int, default=256, help="batch size")
    p.add_argument("--L", default="log2", help="SPM depth: 'log2' or an integer")
    p.add_argument("--variant", default="rotation", choices=["rotation", "general"], help="SPM block type")
    p.add_argument("--out", default=None, help="write records here as JSON lines")

    p = sub.add_parser("train-teacher", parents=[common], help="fit a student to a frozen SPM teacher",
                       description="Student: operator -> ReLU -> dense head, trained on hard labels "
                                   "from a random SPM -> ReLU -> dense teacher.")
    _train_flags(p, **harness.teacher_config().to_dict())
    p.add_argument("--n", type=int, default=64, help="width")
    p.add_argument("--classes", type=int, default=10, help="number of classes")
    p.add_argument("--train-size", type=int, default=5000, help="training examples")
    p.add_argument("--test-size", type=int, default=1000, help="held-out examples")

    p = sub.add_parser("train-textclass", parents=[common], help="hashed-feature text classification",
                       description="Train on 'label,text' CSV rows hashed into n buckets.")
    _train_flags(p, **harness.textclass_config().to_dict())
    p.add_argument("--train", default=None, help="training CSV (default: bundled sample)")
    p.add_argument("--test", default=None, help="test CSV (default: hold out --test-fraction of --train)")
    p.add_argument("--n", type=int, default=256, help="hash buckets = layer width")
    p.add_argument("--test-fraction", type=float, default=0.2, help="held-out share when --test is absent")

    p = sub.add_parser("train-charlm", parents=[common], help="byte-level language model",
                       description="embedding -> operator -> ReLU -> 256-way head, next-byte prediction.")
    _train_flags(p, **harness.charlm_config().to_dict())
    p.add_argument("--corpus", default=None, help="text file (default: built-in English corpus)")
    p.add_argument("--d", type=int, default=256, help="model width")
    p.add_argument("--T", type=int, default=64, help="window length")
    p.add_argument("--eval-batches", type=int, default=10, help="validation batches per evaluation")
    return parser


# -- config files ----------------------------------------------------------

def read_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _apply_config(subparser, config: dict):
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in config.items():
        if key not in actions:
            raise UsageError(f"config key {key!r} is not an option of {subparser.prog}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            if raw.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise UsageError(f"config key {key!r} needs a boolean, got {raw!r}")
            defaults[key] = raw.lower() in ("1", "true", "yes")
            continue
        try:
            value = act.type(raw) if act.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from None
        if act.choices is not None and value not in act.choices:
            raise UsageError(f"config key {key!r} must be one of {list(act.choices)}")
        defaults[key] = value
    subparser.set_defaults(**defaults)


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, read_config(args.config))
        args = parser.parse_args(argv)
    return args


# -- commands --------------------------------------------------------------

def _residual(name):
    return "learned_scale" if name == "learned" else name


def _setup(args, default_precision):
    if args.backend:
        _backend.set_backend(args.backend)
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        _backend.set_threads(args.threads)
    if args.deterministic:
        _backend.set_threads(1)
    args.precision = args.precision or default_precision
    resolve_dtype(args.precision)


def cmd_gradcheck(args, out) -> int:
    if args.n < 2:
        raise UsageError(f"--n must be >= 2, got {args.n}")
    L = default_depth(args.n) if args.L is None else args.L
    if L < 1:
        raise UsageError("--L must be >= 1")
    if resolve_dtype(args.precision) != np.float64:
        print("note: finite-difference checks always run in float64", file=out)
    reports = run_suite(args.variant, args.n, L, args.schedule, _residual(args.residual), args.seed)
    ok = True
    for r in reports:
        for line in r.lines():
            print(line, file=out)
        ok &= r.passed
    worst = max(r.max_error for r in reports)
    print(f"{'PASS' if ok else 'FAIL'} gradcheck: worst relative error {worst:.3e}", file=out)
    return EXIT_OK if ok else EXIT_CHECK


def _orthogonality_residual(layer) -> float | None:
    if layer.kind != "spm" or layer.variant != "rotation":
        return None
    unit = layer.astype(np.float64)
    unit.d_in[:] = 1
    unit.d_out[:] = 1
    W = materialize(unit)
    return float(np.abs(W.T @ W - np.eye(W.shape[0])).max())


def cmd_materialize(args, out) -> int:
    if args.checkpoint:
        layer = checkpoint.load(args.checkpoint)
    else:
        if args.n < 2:
            raise UsageError(f"--n must be >= 2, got {args.n}")
        layer = make_spm(args.n, args.L, args.variant, args.schedule, _residual(args.residual),
                         seed=args.seed, scheme=args.init, dtype=args.precision)
    inner = layer.inner if isinstance(layer, RectSpm) else layer
    width = max(layer.n_in, layer.n_out)
    if width > args.cap:
        raise UsageError(f"width {width} exceeds materialization cap {args.cap}")
    if layer.kind == "dense":
        W = layer.W.astype(np.float64)
    elif isinstance(layer, RectSpm):
        W = layer.materialize()
    else:
        W = materialize(layer, cap=args.cap)
    x = Rng(args.seed).spawn("materialize").normal((8, layer.n_in)).astype(layer.dtype)
    y = np.asarray(layer.forward(x)[0], dtype=np.float64)
    bias = inner.bias if layer.kind == "spm" else layer.bias
    ref = x.astype(np.float64) @ W.T + np.asarray(bias[:layer.n_out], dtype=np.float64)
    fwd = float(np.abs(y - ref).max() / max(1.0, np.abs(ref).max()))
    tol = 1e-10 if layer.dtype == np.float64 else 1e-5
    ok = fwd < tol
    print(f"layer: {layer!r}", file=out)
    print(f"forward-equivalence residual {fwd:.3e} (< {tol:g})", file=out)
    orth = _orthogonality_residual(inner) if layer.kind == "spm" else None
    if orth is not None:
        print(f"orthogonality residual |WtW - I|_max with unit diagonals {orth:.3e} (< 1e-10)", file=out)
        ok &= orth < 1e-10
    if args.out:
        try:
            np.savetxt(args.out, W, fmt="%.17g")
        except OSError as exc:
            raise DataError(f"cannot write {args.out}: {exc}") from exc
    elif width <= 16:
        np.savetxt(out, W, fmt="% .6f")
    if args.save and not args.checkpoint:
        checkpoint.save(layer, args.save, {"init": args.seed})
    print("PASS" if ok else "FAIL", file=out)
    return EXIT_OK if ok else EXIT_CHECK


def _write_jsonl(path, rows):
    if not path:
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for r in rows:
                fh.write(json.dumps(r) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def cmd_bench(args, out) -> int:
    for k in args.kinds:
        if k not in ("dense", "spm"):
            raise UsageError(f"unknown kind {k!r}")
    if args.L != "log2":
        try:
            int(args.L)
        except ValueError:
            raise UsageError(f"--L must be 'log2' or an integer, got {args.L!r}") from None
    records = harness.timing_sweep(args.kinds, args.widths, args.L, args.steps, args.batch,
                                   args.variant, args.precision, args.seed, warmup=args.warmup)
    for r in records:
        print(json.dumps(r.to_dict()), file=out)
    for kind in args.kinds:
        rs = [r for r in records if r.kind == kind]
        if rs and rs[0].slope is not None:
            print(f"{kind}: log-log slope {rs[0].slope:.3f}", file=out)
    dense = [r for r in records if r.kind == "dense"]
    spm = [r for r in records if r.kind == "spm"]
    for n, ratio in speedups(dense, spm):
        print(f"n={n}: dense/spm time ratio {ratio:.2f}x", file=out)
    _write_jsonl(args.out, [r.to_dict() for r in records])
    return EXIT_OK


def _train_config(args, **extra):
    return harness.TrainConfig(
        model=args.model, variant=args.variant, L=args.L, schedule=args.schedule,
        residual=_residual(args.residual), steps=args.steps, batch=args.batch, lr=args.lr,
        optimizer=args.optimizer, seed=args.seed, eval_every=args.eval_every,
        precision=args.precision, **extra)


def _finish(args, record, out, keys) -> int:
    _write_jsonl(args.out, record.evals)
    final = record.final
    parts = [f"{k}={final[k]:.4f}" for k in keys if k in final]
    ms = record.mean_ms_per_step()
    if ms is not None:
        parts.append(f"ms_per_step={ms:.3f}")
    print(f"final {record.experiment} {args.model}: " + " ".join(parts), file=out)
    if args.save:
        checkpoint.save(record.model.body, args.save, {"seed": args.seed})
    return EXIT_OK


def _logger(out):
    return lambda row: print(json.dumps(row), file=out, flush=True)


def cmd_train_teacher(args, out) -> int:
    cfg = _train_config(args, n=args.n, classes=args.classes, train_size=args.train_size,
                        test_size=args.test_size)
    record = harness.run_teacher_experiment(cfg, log=_logger(out))
    return _finish(args, record, out, ("valid_acc", "valid_nll"))


def cmd_train_textclass(args, out) -> int:
    cfg = _train_config(args, n=args.n, test_fraction=args.test_fraction)
    record = harness.run_textclass_experiment(cfg, args.train, args.test, log=_logger(out))
    return _finish(args, record, out, ("valid_acc", "valid_nll"))


def cmd_train_charlm(args, out) -> int:
    cfg = _train_config(args, n=args.d, T=args.T, eval_batches=args.eval_batches)
    record = harness.run_charlm_experiment(cfg, args.corpus, log=_logger(out))
    return _finish(args, record, out, ("valid_nll", "valid_bpc"))


COMMANDS = {
    "gradcheck": (cmd_gradcheck, "float64"),
    "materialize": (cmd_materialize, "float64"),
    "bench": (cmd_bench, "float32"),
    "train-teacher": (cmd_train_teacher, "float32"),
    "train-textclass": (cmd_train_textclass, "float32"),
    "train-charlm": (cmd_train_charlm, "float32"),
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        fn, precision = COMMANDS[args.command]
        _setup(args, precision)
        return fn(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
