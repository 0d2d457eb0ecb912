#!/usr/bin/env python3
"""End-to-end pipeline demo on mock backends, all offline.

Generates the default 30-scenario corpus, runs the oracle and a scrambler
backend over the test split, scores both, mines preference pairs with a noisy
oracle, auto-approves, and exports the preference dataset. Everything lands
under the given workdir (default ./demo_run).

    python3 scripts/oracle_closure_demo.py [workdir] [seed]
"""

from __future__ import annotations

import sys
from pathlib import Path

from behaviorlab.cli import main


def run(argv: list[str]) -> None:
    code = main(argv)
    if code != 0:
        sys.exit(code)


def demo(workdir: str = "demo_run", seed: str = "42") -> None:
    corpus = str(Path(workdir) / "corpus")
    base = ["--corpus", corpus, "--seed", seed, "--backend", "mock"]

    print("== generate ==")
    run(["--corpus", corpus, "--seed", seed, "generate"])

    print("\n== predict + score: oracle ==")
    run([*base, "--mock-mode", "oracle", "--model-id", "mock-oracle", "predict"])
    run([*base, "--mock-mode", "oracle", "--model-id", "mock-oracle", "score"])

    print("\n== predict + score: scrambler (noun noise 0.5) ==")
    scr = [*base, "--mock-mode", "scrambler", "--noun-noise", "0.5",
           "--model-id", "mock-scrambler"]
    run([*scr, "predict"])
    run([*scr, "score"])

    print("\n== combined report ==")
    run(["--corpus", corpus, "report"])

    print("\n== mine + export preference pairs (noisy oracle, J=8) ==")
    run([*base, "--mock-mode", "noisy_oracle", "--verb-noise", "0.4",
         "--noun-noise", "0.4", "--model-id", "mock-noisy", "-J", "8",
         "mine", "--auto-approve"])
    run(["--corpus", corpus, "export"])

    print("\n== toy loss verification ==")
    run(["dpo-check"])

    print(f"\nartifacts under {workdir}/corpus (reports/, scores/, exports/)")


if __name__ == "__main__":
    demo(*sys.argv[1:3])
