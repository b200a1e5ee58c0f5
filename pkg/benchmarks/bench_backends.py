"""Compiled kernels vs numpy fallback: ms per forward+backward, and agreement.

    python3 benchmarks/bench_backends.py [--widths 256,512,1024,2048] [--batch 256]
"""
from __future__ import annotations

import argparse
import json

import numpy as np

from spmix import _backend
from spmix.bench import median_of_means, time_steps
from spmix.dense import DenseLayer
from spmix.spm import make_spm
from spmix.tensor import Rng


def _layer(kind, n, variant, dtype):
    if kind == "dense":
        return DenseLayer.init(n, n, Rng(0), dtype)
    return make_spm(n, None, variant, seed=0, scheme="random", dtype=dtype)


def _step(layer, x, g):
    def step():
        _, tape = layer.forward(x)
        layer.backward(tape, g)
    return step


def compare(widths, batch=256, steps=30, variant="rotation", precision="float32"):
    rows = []
    backends = _backend.available()
    for kind in ("spm", "dense"):
        for n in widths:
            layer = _layer(kind, n, variant, precision)
            rng = Rng(1).spawn(f"bench-{n}")
            x = rng.normal((batch, n)).astype(layer.dtype)
            g = rng.normal((batch, n)).astype(layer.dtype)
            row = {"kind": kind, "n": n}
            outs = {}
            for b in backends:
                with _backend.use_backend(b):
                    row[f"{b}_ms"] = median_of_means(time_steps(_step(layer, x, g), steps))
                    y, tape = layer.forward(x)
                    outs[b] = (y, layer.backward(tape, g).g_x)
            if len(outs) == 2:
                (ya, ga), (yb, gb) = outs.values()
                row["max_abs_diff"] = float(max(np.abs(ya - yb).max(), np.abs(ga - gb).max()))
                row["python/compiled"] = row["python_ms"] / row["compiled_ms"]
            rows.append(row)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--widths", default="256,512,1024,2048")
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--variant", default="rotation", choices=["rotation", "general"])
    ap.add_argument("--precision", default="float32")
    ap.add_argument("--json", action="store_true", help="emit JSON lines instead of a table")
    args = ap.parse_args()
    widths = [int(w) for w in args.widths.split(",")]
    print(f"backends available: {', '.join(_backend.available())}")
    rows = compare(widths, args.batch, args.steps, args.variant, args.precision)
    if args.json:
        for r in rows:
            print(json.dumps(r))
        return
    cols = [c for c in ("kind", "n", "compiled_ms", "python_ms", "python/compiled", "max_abs_diff")
            if any(c in r for r in rows)]
    print("  ".join(f"{c:>15}" for c in cols))
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c, "")
            cells.append(f"{v:>15.4g}" if isinstance(v, float) else f"{v!s:>15}")
        print("  ".join(cells))


if __name__ == "__main__":
    main()
