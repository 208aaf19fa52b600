#!/usr/bin/env python3
# Copyright 2026 The enercast Authors.
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the synthetic calibration, trace and grid fixtures.

Collectives follow an alpha-beta model:

    latency = alpha(kind, world) + traffic(kind, world) * bytes / bw(world, sm)
    bw(world, sm) = busbw(world) * sm / (sm + 4) * 36 / 32
    energy = world * (140 + 110 * sm / 32) * latency

so bandwidth saturates near 32 SMs and group energy is per-GPU power times
world size times latency.
"""

import argparse
import json
import os
import random

KINDS = ("AllReduce", "ReduceScatter", "AllGather", "AllToAll")
WORLDS = (2, 4, 8)
SM_COUNTS = (1, 2, 4, 8, 16, 32)
SIZES = tuple(2**k for k in range(10, 31))  # 1 KiB .. 1 GiB

ALPHA_S = {2: 8e-6, 4: 12e-6, 8: 18e-6}
ALPHA_SCALE = {"AllReduce": 1.0, "ReduceScatter": 0.7, "AllGather": 0.7, "AllToAll": 1.0}
BUSBW = {2: 200e9, 4: 190e9, 8: 180e9}


def traffic(kind, world):
    if kind == "AllReduce":
        return 2.0 * (world - 1) / world
    return (world - 1) / world


def comm_point(kind, world, sm, size):
    bw = BUSBW[world] * sm / (sm + 4) * 36 / 32
    latency = ALPHA_S[world] * ALPHA_SCALE[kind] + traffic(kind, world) * size / bw
    power = 140.0 + 110.0 * sm / 32
    return latency, world * power * latency


def write_comm(path):
    with open(path, "w") as f:
        f.write("# synthetic alpha-beta collective calibration; see tools/gen_fixtures.py\n")
        f.write("# alpha_s: world2=8e-6 world4=12e-6 world8=18e-6; x0.7 for ReduceScatter/AllGather\n")
        f.write("# busbw: world2=200e9 world4=190e9 world8=180e9 B/s, scaled by sm/(sm+4)*36/32\n")
        f.write("# energy_j is whole-group: world * (140 + 110*sm/32) W * latency\n")
        f.write("kind,world,sm_count,bytes,latency_s,energy_j\n")
        for kind in KINDS:
            for world in WORLDS:
                for sm in SM_COUNTS:
                    for size in SIZES:
                        lat, energy = comm_point(kind, world, sm, size)
                        f.write(f"{kind},{world},{sm},{size},{lat!r},{energy!r}\n")


def write_gemm(path):
    """Roofline-shaped table with a 10% latency penalty and fixed power levels."""
    peak, bw = 312e12 * 0.7, 2.0e12 * 0.8
    dims = (64, 256, 1024, 4096, 16384)
    with open(path, "w") as f:
        f.write("# synthetic GEMM calibration; see tools/gen_fixtures.py\n")
        f.write("G,M,contraction,N,dtype_bytes,latency_s,power_w\n")
        for m in dims:
            for k in dims:
                for n in dims:
                    t_c = 2.0 * m * k * n / peak
                    t_m = 2.0 * (m * k + k * n + m * n) / bw
                    lat = 1.1 * max(t_c, t_m) + 5e-6
                    util = 0.5 * (1.0 + min(t_c, t_m) / max(t_c, t_m))
                    power = 80.0 + 320.0 * util
                    f.write(f"1,{m},{k},{n},2,{lat!r},{power!r}\n")


def write_trace(path, tokens=4096, experts=128, top_k=8, seed=7):
    """Zipf-skewed top-k routing over a seeded permutation of experts."""
    rng = random.Random(seed)
    order = list(range(experts))
    rng.shuffle(order)
    weights = [1.0 / (rank + 1) ** 0.8 for rank in range(experts)]
    with open(path, "w") as f:
        f.write(f"# synthetic skewed routing trace: {tokens} tokens, {experts} experts, top-{top_k}, seed {seed}\n")
        f.write("token_index," + ",".join(f"e{i + 1}" for i in range(top_k)) + "\n")
        for t in range(tokens):
            chosen = []
            pool = list(range(experts))
            w = list(weights)
            for _ in range(top_k):
                pick = rng.choices(range(len(pool)), weights=w)[0]
                chosen.append(order[pool[pick]])
                del pool[pick]
                del w[pick]
            f.write(f"{t}," + ",".join(str(e) for e in chosen) + "\n")


GRIDS = {
    "prefill_tp_batch_isl.json": {
        "format_version": 1,
        "phase": ["prefill"],
        "batch": [1, 2, 4, 8, 16, 32, 64],
        "isl": list(range(256, 8193, 256)),
        "tp": [2, 4, 8],
    },
    "prefill_overlap.json": {
        "format_version": 1,
        "phase": ["prefill"],
        "batch": [1, 2, 4, 8, 16],
        "isl": [4096],
        "tp": [2, 4, 8],
        "overlap": ["none", "4:1", "4:4", "4:16"],
    },
    "decode_batch.json": {
        "format_version": 1,
        "phase": ["decode"],
        "batch": [1, 2, 4, 8, 16],
        "isl": [512],
        "osl": [1024],
        "tp": [2, 4, 8],
    },
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", default=os.path.join(os.path.dirname(__file__), "..", "fixtures"))
    args = ap.parse_args()
    root = os.path.abspath(args.root)
    write_comm(os.path.join(root, "calibration", "comm_synthetic.csv"))
    write_gemm(os.path.join(root, "calibration", "gemm_synthetic.csv"))
    write_trace(os.path.join(root, "traces", "qwen_skewed_trace.csv"))
    for name, grid in GRIDS.items():
        with open(os.path.join(root, "grids", name), "w") as f:
            json.dump(grid, f, indent=2)
            f.write("\n")


if __name__ == "__main__":
    main()
