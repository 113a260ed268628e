#!/usr/bin/env python3
"""Benchmark the compiled grid-accumulation kernel against the pure-Python
fallback, verifying bit-identical output along the way.

Run:  python3 benchmarks/benchmark_maps.py [--frames 2000] [--agents 6]
"""

import argparse
import time

import numpy as np

from amenet.maps import MapConfig
from amenet.maps import _accum


def make_frames(n_frames, n_agents, seed=0):
    rng = np.random.default_rng(seed)
    frames = []
    for _ in range(n_frames):
        rel_pos = np.ascontiguousarray(rng.uniform(-20, 20, (n_agents, 2)))
        rel_off = np.ascontiguousarray(rng.uniform(-2, 2, (n_agents, 2)))
        nbr_off = np.ascontiguousarray(rng.uniform(-2, 2, (n_agents, 2)))
        frames.append((rel_pos, rel_off, nbr_off))
    return frames


def run(fn, frames, shape):
    outputs = []
    t0 = time.perf_counter()
    for rel_pos, rel_off, nbr_off in frames:
        acc = [np.zeros(shape) for _ in range(4)]
        fn(rel_pos, rel_off, nbr_off, 0.4, *acc)
        outputs.append(acc)
    return time.perf_counter() - t0, outputs


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=2000)
    parser.add_argument("--agents", type=int, default=6)
    args = parser.parse_args()

    cfg = MapConfig()
    shape = (cfg.width, cfg.height)
    frames = make_frames(args.frames, args.agents)

    py_time, py_out = run(_accum.accumulate_dynamic_py, frames, shape)
    if _accum._compiled is None:
        print("compiled kernel not built; only timing the Python fallback")
        print(f"python fallback: {py_time:.3f} s for {args.frames} frames")
        return
    cy_time, cy_out = run(_accum._compiled.accumulate_dynamic, frames, shape)

    for a, b in zip(py_out, cy_out):
        for x, y in zip(a, b):
            if not np.array_equal(x, y):
                raise SystemExit("MISMATCH: kernel and fallback disagree")

    print(f"{args.frames} frames x {args.agents} agents on a {cfg.width}x{cfg.height} grid")
    print(f"  python fallback : {py_time * 1e3:8.1f} ms  ({py_time / args.frames * 1e6:7.1f} us/frame)")
    print(f"  cython kernel   : {cy_time * 1e3:8.1f} ms  ({cy_time / args.frames * 1e6:7.1f} us/frame)")
    print(f"  speedup         : {py_time / cy_time:8.1f}x")
    print("  outputs bit-identical: yes")


if __name__ == "__main__":
    main()
