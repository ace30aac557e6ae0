"""Exact hard/easy N-chain BPD curves for N = 3..8, written as CSV with a manifest.

Usage: python3 scripts/run_fig1.py [--out DIR]
"""

from __future__ import annotations

import argparse
import sys

from bpd.cli import main


def run(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results/fig1")
    args = parser.parse_args(argv)
    return main(["repro", "fig1", "--out", args.out])


if __name__ == "__main__":
    sys.exit(run())
