#!/usr/bin/env python3
"""Plot evaluation traces from a run directory: style-reward crossover and
base-stability panels for every traces/*.csv (needs matplotlib)."""

import argparse
import sys
from pathlib import Path

import numpy as np

from faultgait.evaluate import read_trace


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--run-dir", required=True)
    parser.add_argument("--out-dir", default=None, help="default: <run-dir>/reports")
    args = parser.parse_args()
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run = Path(args.run_dir)
    out = Path(args.out_dir) if args.out_dir else run / "reports"
    out.mkdir(parents=True, exist_ok=True)
    traces = sorted((run / "traces").glob("*.csv"))
    if not traces:
        print("no traces found; run the eval stage first", file=sys.stderr)
        return 1
    for path in traces:
        t = read_trace(path)
        steps = t["step"]
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
        ax1.plot(steps, t["style_fault"], label="vs fault teacher", color="tab:blue")
        ax1.plot(steps, t["style_normal"], label="vs normal teacher", color="tab:red")
        changes = np.nonzero(np.diff(t["class_active"]) != 0)[0]
        for c in changes:
            ax1.axvline(steps[c + 1], color="gray", ls="--", lw=0.8)
            ax2.axvline(steps[c + 1], color="gray", ls="--", lw=0.8)
        ax1.set_ylabel("style reward")
        ax1.legend(loc="best")
        ax2.plot(steps, t["roll_rate"], label="roll rate", lw=0.8)
        ax2.plot(steps, t["pitch_rate"], label="pitch rate", lw=0.8)
        ax2.plot(steps, t["vel_x"], label="forward velocity", lw=0.8)
        ax2.plot(steps, t["base_height"], label="base height", lw=0.8)
        ax2.set_xlabel("control step")
        ax2.legend(loc="best", ncol=2, fontsize=8)
        fig.suptitle(path.stem)
        fig.tight_layout()
        dest = out / f"{path.stem}.png"
        fig.savefig(dest, dpi=120)
        plt.close(fig)
        print(f"wrote {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
