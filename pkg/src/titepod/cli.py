"""Command-line entry points: simulate, decide, calibrate, report, serve.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import DesignSpec, build_engine, load_config, load_scenario_file, spec_from_mapping
from .core import PatientRecord, snapshot, tally
from .scenarios import SCENARIOS, SETTINGS, calibrate_weibull
from .simulate import metrics_table, run_batch

CONFIG_ERROR = 2
RUNTIME_ERROR = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="titepod",
        description="Time-to-event and probability-of-decision dose-finding designs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a batch of simulated trials")
    sim.add_argument("--design", required=True)
    sim.add_argument("--scenario", type=int, action="append",
                     help="scenario number 1-18 from the shipped table (repeatable)")
    sim.add_argument("--scenario-file", help="YAML scenario document")
    sim.add_argument("--setting", default="1", help="1|2|3 or a preset name")
    sim.add_argument("--n-sims", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--rules", help="suspension shorthand, e.g. fixed:half or prob:0")
    sim.add_argument("--cohort", type=int)
    sim.add_argument("--config", help="YAML run configuration")
    sim.add_argument("--out", help="output CSV path (default stdout)")
    sim.add_argument("--workers", type=int, default=1)

    dec = sub.add_parser("decide", help="one-shot engine decision on a history file")
    dec.add_argument("history", help="JSONL patient records")
    dec.add_argument("--design", required=True)
    dec.add_argument("--config", help="YAML run configuration")
    dec.add_argument("--at", type=float, help="trial clock in days (default: all assessed)")
    dec.add_argument("--current", type=int, help="current dose (default: last patient's)")
    dec.add_argument("--seed", type=int, default=0)

    cal = sub.add_parser("calibrate", help="Weibull onset calibration")
    cal.add_argument("--p", type=float, required=True, help="window DLT probability")
    cal.add_argument("--window", type=float, default=28.0)
    cal.add_argument("--split", type=float, required=True, help="onset split point in days")
    cal.add_argument("--late", type=float, required=True, help="fraction of DLTs after the split")

    rep = sub.add_parser("report", help="rank design result tables by a weighted loss")
    rep.add_argument("tables", nargs="+", help="CSV files produced by `simulate`")
    rep.add_argument("--weights", default="1,1,1,1,1,1,1,1,0.01",
                     help="loss weights for PCS,PCA,POS,POA,POT,DS,DE,SE,Dur")

    srv = sub.add_parser("serve", help="run the trial-conduct HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8321)
    srv.add_argument("--state-dir", default=".titepod-sessions")
    return parser


def _spec_from_args(args) -> DesignSpec:
    mapping = load_config(args.config) if getattr(args, "config", None) else {}
    spec = spec_from_mapping(args.design, mapping)
    if getattr(args, "rules", None):
        spec = dataclasses.replace(spec, suspension=cfgmod.suspension_from_text(args.rules))
    if getattr(args, "cohort", None):
        spec = dataclasses.replace(spec, cohort=args.cohort)
    return spec


def _resolve_setting(text: str):
    key = f"setting{text}" if text in ("1", "2", "3") else text
    if key not in SETTINGS:
        raise KeyError(f"unknown setting {text!r}")
    return SETTINGS[key]


def cmd_simulate(args) -> int:
    try:
        spec = _spec_from_args(args)
        build_engine(spec)  # validate before any sampling
        setting = _resolve_setting(args.setting)
        if args.scenario_file:
            scenarios = load_scenario_file(args.scenario_file)
        elif args.scenario:
            scenarios = [SCENARIOS[i - 1] for i in args.scenario]
        else:
            scenarios = list(SCENARIOS)
        for sc in scenarios:
            if len(sc.doses) != spec.levels:
                raise ValueError(
                    f"{sc.name}: {len(sc.doses)} doses vs design grid of {spec.levels}"
                )
    except (KeyError, ValueError, IndexError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    try:
        batch = run_batch(
            spec, scenarios, setting, args.n_sims, seed=args.seed, workers=args.workers
        )
        table = metrics_table(batch)
        if args.out:
            Path(args.out).write_text(table)
        else:
            sys.stdout.write(table)
    except Exception as exc:  # pragma: no cover - unexpected runtime faults
        print(f"runtime failure: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    return 0


def _read_history(path) -> list:
    """JSONL history: either full patient records or shorthand
    {"dose": z, "dlt": bool} / {"dose": z, "dlt_day": t} entries."""
    records = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            dose = int(obj["dose"])
            enroll = float(obj.get("enroll_time", obj.get("enroll_day", 0.0)))
            if "dlt_time" in obj or "dlt_day" in obj:
                raw = obj.get("dlt_time", obj.get("dlt_day"))
                dlt = None if raw is None else float(raw)
            else:
                dlt = 1.0 if obj.get("dlt") else None
            records.append(PatientRecord(int(obj.get("id", i)), dose, enroll, dlt))
    return records


def cmd_decide(args) -> int:
    try:
        spec = _spec_from_args(args)
        engine = build_engine(spec)
        records = _read_history(args.history)
    except (KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    if not records:
        print(f"decision: start at dose {spec.start_dose} (no history)")
        return 0
    window = spec.window
    clock = args.at
    if clock is None:
        clock = max(r.enroll_time for r in records) + window
    snap = snapshot(records, clock, window)
    tly = tally(snap, spec.levels)
    current = args.current or records[-1].dose
    out = engine.decide(snap, tly, current, np.random.default_rng(args.seed))
    dec = out.decision
    print(f"design: {spec.name}")
    print(f"current dose: {current}; pending outcomes: {snap.num_pending}")
    print(f"decision: {dec.kind.value} -> dose {dec.level}")
    if out.pod is not None:
        print("probability of decision:")
        for d, p in out.pod.entries:
            print(f"  dose {d.level}: {p:.4f}")
    return 0


def cmd_calibrate(args) -> int:
    try:
        shape, scale = calibrate_weibull(args.p, args.window, args.split, args.late)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    print(f"shape: {shape:.6f}")
    print(f"scale: {scale:.6f}")
    return 0


def cmd_report(args) -> int:
    import csv

    try:
        weights = [float(x) for x in args.weights.split(",")]
        if len(weights) != 9:
            raise ValueError("need 9 loss weights")
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    rows = []
    for path in args.tables:
        try:
            with open(path) as fh:
                table = list(csv.DictReader(fh))
        except OSError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return CONFIG_ERROR
        avg = next((r for r in table if r["scenario"] == "average"), table[-1])
        vals = [float(avg[c]) for c in ("PCS", "PCA", "POS", "POA", "POT", "DS", "DE", "SE", "Dur")]
        loss = (
            -weights[0] * vals[0]
            - weights[1] * vals[1]
            + sum(w * v for w, v in zip(weights[2:], vals[2:]))
        )
        rows.append((loss, path, vals))
    rows.sort()
    print("loss,table,PCS,Dur")
    for loss, path, vals in rows:
        print(f"{loss:.4f},{path},{vals[0]:.2f},{vals[8]:.2f}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(state_dir=args.state_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "simulate": cmd_simulate,
        "decide": cmd_decide,
        "calibrate": cmd_calibrate,
        "report": cmd_report,
        "serve": cmd_serve,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
