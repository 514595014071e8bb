"""Compare the compiled and pure-Python distance kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 20] [--seed 0] [--end-to-end]

For each batched kernel the script times both backends on inputs sized like
one planning cycle of the Scenario-B replica (6 links against the obstacle
primitives), reports the median time per call and the speedup, and checks
that both backends return the same numbers. ``--end-to-end`` additionally
times a full simulated run per backend in a subprocess, since the backend
is fixed when ``rdcbf`` is imported.
"""
from __future__ import annotations

import argparse
import json
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from rdcbf import kernels


def _inputs(rng, n_links=6, n_segs=60, n_rects=40, n_pairs=9):
    links = rng.uniform(-1, 1, (n_links, 2, 3))
    segs = rng.uniform(-2, 2, (n_segs, 2, 3))
    c = rng.uniform(-2, 2, (n_rects, 3))
    u = rng.normal(size=(n_rects, 3))
    v = np.cross(u, rng.normal(size=(n_rects, 3)))
    u *= rng.uniform(0.1, 0.6, (n_rects, 1)) / np.linalg.norm(u, axis=1, keepdims=True)
    v *= rng.uniform(0.1, 0.6, (n_rects, 1)) / np.linalg.norm(v, axis=1, keepdims=True)
    rects = np.stack([c - u - v, c + u - v, c + u + v, c - u + v], axis=1)
    pa = rng.uniform(-1, 1, (n_pairs, 2, 3))
    pb = rng.uniform(-1, 1, (n_pairs, 2, 3))
    return {
        "link_segment_sqdist": (links, segs),
        "link_rect_sqdist": (links, rects),
        "segment_pairs_sqdist": (pa, pb),
    }


def _time(fn, args, repeat):
    fn(*args)  # warm-up
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def _max_diff(a, b):
    return max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(a, b))


def bench_kernels(repeat, seed):
    impls = kernels.backends()
    rng = np.random.default_rng(seed)
    rows = []
    for name, args in _inputs(rng).items():
        times = {b: _time(getattr(m, name), args, repeat) for b, m in impls.items()}
        diff = None
        if "cython" in impls:
            diff = _max_diff(getattr(impls["python"], name)(*args), getattr(impls["cython"], name)(*args))
        rows.append({"kernel": name, "times": times, "max_backend_diff": diff})
    return rows


def _end_to_end(scenario, mode, seed):
    code = ("import json, time; from rdcbf import kernels, sim; t = time.perf_counter(); "
            f"r = sim.run(sim.load_scenario({scenario!r}), {mode!r}, seed={seed}); "
            "print(json.dumps({'backend': kernels.BACKEND, 'seconds': time.perf_counter() - t, "
            "'hz': r.mean_frequency, 'summary': r.timing_free_summary()}))")
    out = {}
    for pure in ("0", "1"):
        env = dict(os.environ, RDCBF_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        doc = json.loads(res.stdout.strip().splitlines()[-1])
        out[doc["backend"]] = doc
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--end-to-end", action="store_true", help="also time one full run per backend")
    ap.add_argument("--scenario", default="b")
    ap.add_argument("--mode", default="rdcbf")
    args = ap.parse_args(argv)

    print(f"selected backend: {kernels.BACKEND}")
    rows = bench_kernels(args.repeat, args.seed)
    print(f"{'kernel':22s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for r in rows:
        py = r["times"]["python"] * 1e3
        cy = r["times"].get("cython")
        cy_s = f"{cy * 1e3:10.3f}" if cy is not None else f"{'-':>10s}"
        sp = f"{py / (cy * 1e3):8.1f}" if cy else f"{'-':>8s}"
        diff = f"{r['max_backend_diff']:10.1e}" if r["max_backend_diff"] is not None else f"{'-':>10s}"
        print(f"{r['kernel']:22s} {py:10.3f} {cy_s} {sp} {diff}")

    if args.end_to_end:
        res = _end_to_end(args.scenario, args.mode, args.seed)
        for b, doc in res.items():
            print(f"end-to-end {b:7s}: {doc['seconds']:7.2f} s wall, planner {doc['hz']:7.0f} Hz")
        if len(res) == 2:
            same = res["python"]["summary"] == res["cython"]["summary"]
            print(f"identical run summaries across backends: {same}")


if __name__ == "__main__":
    main()
