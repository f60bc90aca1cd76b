#!/usr/bin/env python3
"""Run the full desk-scale training pipeline into a run directory.

Equivalent to `faultgait pipeline ...` with sensible experiment defaults;
resumable after interruption.
"""

import argparse
import sys

from faultgait.cli import main as cli_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--run-dir", default="runs/desk0")
    parser.add_argument("--profile", default="desk", choices=("desk", "paper"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=2)
    args = parser.parse_args()
    return cli_main(["pipeline", "--run-dir", args.run_dir, "--profile", args.profile,
                     "--seed", str(args.seed), "--jobs", str(args.jobs)])


if __name__ == "__main__":
    sys.exit(main())
