#!/usr/bin/env python3
"""End-to-end CLI walk-through in a scratch directory.

synth -> predict (baseline) -> evaluate, then a short solution-1 pretrain,
finetune and predict, and an ensemble of the two prediction files.

    python scripts/cli_roundtrip.py --workdir /tmp/pf_demo
"""

import argparse
import tempfile
from pathlib import Path

from pulseforge import cli


def run(*argv):
    argv = [str(a) for a in argv]
    print("$ pulseforge " + " ".join(argv))
    code = cli.main(argv)
    if code != 0:
        raise SystemExit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", type=Path, default=None)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--steps", type=int, default=50)
    args = ap.parse_args()
    root = args.workdir or Path(tempfile.mkdtemp(prefix="pulseforge_"))

    data = root / "data"
    run("synth", "--out", data, "--n", args.n, "--meta-rois", 4, "--illum-drift", 0.03, "--seed", 7)
    manifest = data / "manifest.csv"
    run("predict", "--manifest", manifest, "--out", root / "baseline")
    run("evaluate", "--predictions", root / "baseline" / "summary.csv", "--manifest", manifest, "--out", root / "eval_baseline")

    toy = ["--D", 16, "--L", 2, "--window", 150, "--lr", 1e-3, "--steps", args.steps, "--flip-time", "--flip-roi"]
    run("pretrain", "--manifest", manifest, "--out", root / "pretrain", *toy)
    run("finetune", "--manifest", manifest, "--checkpoint", root / "pretrain" / "model.rppg", "--out", root / "finetune",
        "--lr", 1e-3, "--steps", args.steps // 2)
    run("predict", "--manifest", manifest, "--checkpoint", root / "finetune" / "model.rppg", "--mode", "solution1",
        "--window", 150, "--out", root / "solution1")
    run("evaluate", "--predictions", root / "solution1" / "summary.csv", "--manifest", manifest, "--out", root / "eval_solution1")
    run("ensemble", "--inputs", root / "baseline" / "summary.csv", root / "solution1" / "summary.csv", "--out", root / "ensemble")
    run("evaluate", "--predictions", root / "ensemble" / "summary.csv", "--manifest", manifest, "--out", root / "eval_ensemble")
    print(f"artifacts in {root}")


if __name__ == "__main__":
    main()
