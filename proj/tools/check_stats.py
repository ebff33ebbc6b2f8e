#!/usr/bin/env python3
"""Recompute a benchmark summary from its raw records with numpy and compare.

usage: check_stats.py CLI SCENE [--period T] [--slack TS] [--steps N]
"""
import argparse
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("cli")
    ap.add_argument("scene")
    ap.add_argument("--period", type=float, default=0.005)
    ap.add_argument("--slack", type=float, default=0.002)
    ap.add_argument("--steps", type=int, default=300)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "records.csv"
        run = subprocess.run(
            [args.cli, args.scene, "--period", repr(args.period), "--slack", repr(args.slack),
             "--steps", str(args.steps), "--out", str(out)],
            capture_output=True, text=True)
        if run.returncode != 0:
            print(run.stdout, run.stderr)
            return 1
        summary = {}
        for line in run.stdout.splitlines():
            key, _, value = line.partition(": ")
            summary[key] = value
        rec = np.loadtxt(out, delimiter=",", ndmin=2)

    dt = rec[:, 1]
    wall = rec[:, 2][len(rec) // 20:]
    median_rate = 1.0 / np.median(wall)
    spread = 1.0 / np.percentile(wall, 10) - 1.0 / np.percentile(wall, 90)
    violations = int(np.count_nonzero((dt < args.period) | (dt > args.period + args.slack)))

    checks = [
        ("median_rate", median_rate, float(summary["median_rate"]), 1e-8),
        ("spread", spread, float(summary["spread"]), 1e-6),
        ("clamp_violations", violations, int(summary["clamp_violations"]), 0),
        ("discarded", len(rec) // 20, int(summary["discarded"]), 0),
    ]
    ok = True
    for name, want, got, tol in checks:
        good = abs(want - got) <= tol * max(1.0, abs(want))
        ok &= good
        print(f"{name}: numpy {want} cli {got} {'ok' if good else 'MISMATCH'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
