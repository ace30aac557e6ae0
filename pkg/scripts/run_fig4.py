"""Sampled BPD curves for the 4x3 grid with and without lava over slip 0.0..1.0.

Usage: python3 scripts/run_fig4.py [--out DIR] [--seed N] [--samples K]
"""

from __future__ import annotations

import argparse
import sys

from bpd.cli import main


def run(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results/fig4")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--samples", type=int, default=500)
    args = parser.parse_args(argv)
    return main(["repro", "fig4", "--out", args.out, "--seed", str(args.seed), "--samples", str(args.samples)])


if __name__ == "__main__":
    sys.exit(run())
