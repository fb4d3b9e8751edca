"""Cython kernels vs the numpy fallback.

Micro-benchmarks call both kernel modules directly; the end-to-end rows run a
fresh interpreter per backend (``FTDLA_PURE_PYTHON`` toggles the fallback).

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from ftdla import _kernels_py

try:
    from ftdla import _kernels as _kernels_cy
except ImportError:
    _kernels_cy = None

END_TO_END = r"""
import json, time
from ftdla import bitcircuit as bc, explorer, faultsim, kernels
ctx = explorer.Context.tiny()
eng = ctx.engine(0)
cfg = faultsim.FaultConfig(2e-4, 1, 20)
eng.run(cfg, shortcut=False)
t = time.perf_counter(); eng.run(cfg, shortcut=False); faults = time.perf_counter() - t
a, b = bc.all_operand_pairs()
plan = bc.plan_protection("direct", 2, 4)
site = plan.fault_sites()[0]
t = time.perf_counter(); bc.simulate_protected_multiply(a, b, plan, fault=site); mult = time.perf_counter() - t
print(json.dumps({"backend": kernels.BACKEND, "fault trials (20)": faults, "protected multiply (65536)": mult}))
"""


def _micro(mod, repeat):
    rng = np.random.default_rng(0)
    acc = rng.integers(-(1 << 25), 1 << 25, size=200_000)
    vals = rng.integers(0, 256, size=500_000, dtype=np.uint8)
    idx = rng.integers(0, len(vals), size=20_000)
    masks = rng.integers(1, 256, size=len(idx), dtype=np.uint8)
    target = np.zeros((32, 16, 64), dtype=np.int32)
    cols = rng.integers(-128, 128, size=(288, 16, 64)).astype(np.float32)
    n = 5000
    b_idx, c_idx, k_idx = rng.integers(0, 16, n), rng.integers(0, 32, n), rng.integers(0, 288, n)
    delta = rng.integers(-128, 128, n)
    cases = {
        "window_truncate (200k)": lambda: mod.window_truncate(acc, 6),
        "xor_flips (20k)": lambda: mod.xor_flips(vals, idx, masks),
        "scatter_weight_faults (5k)": lambda: mod.scatter_weight_faults(target, cols, b_idx, c_idx, k_idx, delta),
    }
    return {k: min(timeit.repeat(f, number=1, repeat=repeat)) for k, f in cases.items()}


def _end_to_end(pure):
    env = dict(os.environ)
    if pure:
        env["FTDLA_PURE_PYTHON"] = "1"
    else:
        env.pop("FTDLA_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py = _micro(_kernels_py, args.repeat)
    cy = _micro(_kernels_cy, args.repeat) if _kernels_cy else {}
    e_py = _end_to_end(True)
    e_cy = _end_to_end(False) if _kernels_cy else {}
    print(f"{'case':32s} {'python s':>10s} {'cython s':>10s} {'speed-up':>9s}")
    for name, t_py, t_cy in [(k, py[k], cy.get(k)) for k in py] + \
            [(k, e_py[k], e_cy.get(k)) for k in e_py if k != "backend"]:
        if t_cy is None:
            print(f"{name:32s} {t_py:10.4f} {'n/a':>10s} {'':>9s}")
        else:
            print(f"{name:32s} {t_py:10.4f} {t_cy:10.4f} {t_py / t_cy:8.1f}x")
    if not _kernels_cy:
        print("Cython extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
