#!/usr/bin/env python3
"""Sweep the preference-loss strength on a toy policy and export loss traces.

For each beta in {0.01, 0.1, 1.0} a small categorical policy starts at its
frozen reference and descends the preference loss on a fixed pair set; traces
(step, loss, mean margin) land as CSVs for plotting.

    python3 scripts/dpo_beta_sweep.py [outdir]
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from behaviorlab.dpo import ToyPolicy, train_toy, write_trace_csv

BETAS = (0.01, 0.1, 1.0)
PAIRS = [([0, 1, 2], [2, 1, 0]), ([0, 2, 1], [1, 0, 2]), ([1, 2, 0], [2, 0, 1])]


def sweep(outdir: str = "dpo_sweep") -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    ref = ToyPolicy(rng.normal(scale=0.3, size=(3, 3)))
    for beta in BETAS:
        trained, trace = train_toy(
            ref.copy(), ref, PAIRS, beta=beta, lr=0.5, steps=200
        )
        path = out / f"trace_beta_{beta}.csv"
        write_trace_csv(trace, path)
        print(
            f"beta={beta:<5} loss {trace[0].loss:.4f} -> {trace[-1].loss:.4f}   "
            f"margin {trace[0].mean_margin:+.4f} -> {trace[-1].mean_margin:+.4f}   "
            f"({path})"
        )


if __name__ == "__main__":
    sweep(*sys.argv[1:2])
