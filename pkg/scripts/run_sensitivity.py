#!/usr/bin/env python3
"""Sensitivity runs: time-to-toxicity model variants and suspension rules.

Part 1 sweeps POD-TPI over five onset models (uniform, piecewise-uniform
with 3 and 9 pieces, discrete hazard, piecewise constant hazard).  Part 2
sweeps the suspension rule (probability thresholds 0/0.1/0.2/0.3, version
2, version 3 pairs, fixed, none).
"""
import argparse
import os
from pathlib import Path

from titepod.config import DesignSpec
from titepod.rules import SuspensionRule
from titepod.scenarios import SCENARIOS, SETTINGS
from titepod.simulate import run_batch

TOX_VARIANTS = [
    ("uniform", dict(tox_kind="uniform")),
    ("piecewise-uniform-3", dict(tox_kind="piecewise-uniform", tox_pieces=3)),
    ("piecewise-uniform-9", dict(tox_kind="piecewise-uniform", tox_pieces=9)),
    ("discrete-hazard", dict(tox_kind="discrete-hazard")),
    ("piecewise-hazard-3", dict(tox_kind="piecewise-hazard", tox_pieces=3)),
]

RULE_VARIANTS = [
    ("prob-0", SuspensionRule(kind="probability", version=1, q=0.0)),
    ("prob-0.1", SuspensionRule(kind="probability", version=1, q=0.1)),
    ("prob-0.2", SuspensionRule(kind="probability", version=1, q=0.2)),
    ("prob-0.3", SuspensionRule(kind="probability", version=1, q=0.3)),
    ("prob-v2", SuspensionRule(kind="probability", version=2)),
    ("prob-v3-0-0.1", SuspensionRule(kind="probability", version=3, q_escalate=0.0, q_stay=0.1)),
    ("fixed-half", SuspensionRule(kind="fixed", threshold=None)),
    ("none", SuspensionRule(kind="none")),
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--setting", default="1")
    parser.add_argument("--n-sims", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=2026)
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--out", default="results")
    parser.add_argument("--part", choices=("tox", "rules", "both"), default="both")
    args = parser.parse_args()

    setting = SETTINGS[f"setting{args.setting}" if args.setting in "123" else args.setting]
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    header = "variant,PCS,PCA,POS,POA,POT,DS,DE,SE,Dur"

    if args.part in ("tox", "both"):
        rows = [header]
        for label, kwargs in TOX_VARIANTS:
            batch = run_batch(
                DesignSpec(name="pod-tpi", **kwargs), SCENARIOS, setting,
                args.n_sims, seed=args.seed, workers=args.workers,
            )
            avg = batch.averaged()
            rows.append(f"{label}," + ",".join(f"{x:.2f}" for x in avg.row()))
            print(f"tox {label:22s} PCS={avg.pcs:5.1f} POA={avg.poa:5.1f} Dur={avg.duration:6.1f}")
        (outdir / f"pod-tpi-tox-models-{setting.name}.csv").write_text("\n".join(rows) + "\n")

    if args.part in ("rules", "both"):
        rows = [header]
        for label, rule in RULE_VARIANTS:
            batch = run_batch(
                DesignSpec(name="pod-tpi", suspension=rule), SCENARIOS, setting,
                args.n_sims, seed=args.seed, workers=args.workers,
            )
            avg = batch.averaged()
            rows.append(f"{label}," + ",".join(f"{x:.2f}" for x in avg.row()))
            print(f"rule {label:20s} DS={avg.ds:5.1f} DE={avg.de:4.1f} SE={avg.se:5.1f} Dur={avg.duration:6.1f}")
        (outdir / f"pod-tpi-rules-{setting.name}.csv").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
