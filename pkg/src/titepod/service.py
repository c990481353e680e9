"""Stateful trial-conduct service: event-sourced sessions over HTTP.

Each session is an append-only JSONL event log (creation, enrollments,
outcome resolutions); derived state is a pure fold of the log, so
rebuilding a session from disk reproduces recommendations exactly.
Recommendations are pure reads: any Monte Carlo seed is derived from the
session seed and the event count, both of which live in the log.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

from .config import DesignSpec, build_engine, selection_family, spec_from_mapping
from .core import PatientRecord, PatientView, Snapshot, snapshot, tally
from .mtd import select_mtd
from .rules import evaluate_safety, rule3_gate, should_suspend


class CreateSession(BaseModel):
    design: str
    config: Optional[dict] = None
    seed: int = 0


class Enrollment(BaseModel):
    time: float
    dose: Optional[int] = None
    override: bool = False


class Outcome(BaseModel):
    time: float
    patient: int
    dlt_day: Optional[float] = None  # days since the patient's enrollment
    no_dlt: bool = False


class WhatIf(BaseModel):
    resolutions: dict  # patient id (as str or int) -> true for DLT
    at: Optional[float] = None


@dataclass
class Session:
    id: str
    spec: DesignSpec
    engine: object
    seed: int
    events: list = field(default_factory=list)
    patients: list = field(default_factory=list)  # PatientRecord, index = id
    resolved: dict = field(default_factory=dict)  # patient -> "dlt"|"clear"
    clock: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "enroll":
            self.patients.append(
                PatientRecord(
                    int(event["patient"]), int(event["dose"]), float(event["time"]), None
                )
            )
        elif kind == "outcome":
            pid = int(event["patient"])
            rec = self.patients[pid]
            if event.get("dlt_day") is not None:
                self.patients[pid] = PatientRecord(
                    rec.id, rec.dose, rec.enroll_time, float(event["dlt_day"])
                )
                self.resolved[pid] = "dlt"
            else:
                self.resolved[pid] = "clear"
        self.clock = max(self.clock, float(event.get("time", self.clock)))

    def snapshot_at(self, at: Optional[float] = None) -> Snapshot:
        clock = self.clock if at is None else at
        if clock < self.clock:
            raise HTTPException(422, detail={"code": "time-regression",
                                             "message": "clock precedes recorded events"})
        return snapshot(self.patients, clock, self.spec.window)

    def current_dose(self) -> int:
        return self.patients[-1].dose if self.patients else self.spec.start_dose


def _decision_payload(session: Session, snap: Snapshot):
    spec = session.spec
    engine = session.engine
    tly = tally(snap, spec.levels)
    rules = spec.rules()
    status = evaluate_safety(tly, spec.target, rules)
    current = session.current_dose()
    firings = []
    if not session.patients:
        decision = {"kind": "assign", "level": spec.start_dose}
        pod_entries = [{"level": spec.start_dose, "prob": 1.0}]
        suspended = False
        raw_level = spec.start_dose
    else:
        rng = np.random.default_rng((session.seed, len(session.events)))
        out = engine.decide(snap, tly, current, rng)
        raw = out.decision
        suspended = should_suspend(rules.suspension, tly, current, out.pod)
        executed = rule3_gate(raw, tly.clear[current - 1], current)
        if executed.level != raw.level:
            firings.append("rule3")
        cap = status.open_cap(spec.levels)
        level = max(min(executed.level, cap), 1)
        if level < executed.level:
            firings.append("exclusion-clamp")
        decision = {"kind": raw.kind.value, "level": level}
        raw_level = raw.level
        if out.pod is not None:
            pod_entries = [
                {"level": d.level, "prob": float(p)} for d, p in out.pod.entries
            ]
        else:
            pod_entries = [{"level": level, "prob": 1.0}]
    if status.terminated:
        firings.append("safety-termination")
        suspended = True
    if status.trial_suspended:
        firings.append("safety-suspension")
        suspended = True
    if status.excluded_from is not None:
        firings.append(f"excluded-from-{status.excluded_from}")
    from .inference import BetaMixture
    from .weights import build_tox_model, refit_for_decision

    model = refit_for_decision(
        build_tox_model(spec.resolved_tox_kind(), spec.window, spec.tox_pieces, spec.tox_params),
        snap,
    )
    phat = []
    for dose in range(1, spec.levels + 1):
        _, n, m, _ = tly.at(dose)
        rhos = [model.weight(p.follow_up, p.dose) for p in snap.pending_views(dose)]
        phat.append(BetaMixture.from_dose_data(n, m, rhos).mean())
    return {
        "decision": decision,
        "raw_level": raw_level,
        "pod": pod_entries,
        "suspended": bool(suspended),
        "rule_firings": firings,
        "rationale": {
            "current_dose": current,
            "clock": snap.clock,
            "tallies": [
                {"dose": z, "treated": tly.treated[z - 1], "dlt": tly.dlt[z - 1],
                 "clear": tly.clear[z - 1], "pending": tly.pending[z - 1]}
                for z in range(1, spec.levels + 1)
            ],
            "posterior_mean": phat,
        },
    }


class SessionStore:
    def __init__(self, state_dir):
        self.dir = Path(state_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.sessions = {}
        self.lock = threading.Lock()

    def _log_path(self, sid: str) -> Path:
        return self.dir / f"{sid}.jsonl"

    def create(self, body: CreateSession) -> Session:
        try:
            spec = spec_from_mapping(body.design, body.config or {})
            engine = build_engine(spec)
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(422, detail={"code": "bad-config", "message": str(exc)})
        sid = uuid.uuid4().hex[:12]
        session = Session(id=sid, spec=spec, engine=engine, seed=body.seed)
        create_event = {
            "type": "create",
            "time": 0.0,
            "design": body.design,
            "config": body.config or {},
            "seed": body.seed,
        }
        session.events.append(create_event)
        with self.lock:
            self.sessions[sid] = session
        self._append(sid, create_event)
        return session

    def _append(self, sid: str, event: dict) -> None:
        with open(self._log_path(sid), "a") as fh:
            fh.write(json.dumps(event) + "\n")

    def record(self, session: Session, event: dict) -> None:
        session.events.append(event)
        session.apply(event)
        self._append(session.id, event)

    def get(self, sid: str) -> Session:
        with self.lock:
            if sid in self.sessions:
                return self.sessions[sid]
        session = self._load(sid)
        if session is None:
            raise HTTPException(404, detail={"code": "unknown-session", "message": sid})
        with self.lock:
            self.sessions[sid] = session
        return session

    def _load(self, sid: str) -> Optional[Session]:
        path = self._log_path(sid)
        if not path.exists():
            return None
        events = [json.loads(line) for line in path.read_text().splitlines() if line]
        head = events[0]
        spec = spec_from_mapping(head["design"], head.get("config") or {})
        session = Session(
            id=sid, spec=spec, engine=build_engine(spec), seed=int(head.get("seed", 0))
        )
        session.events.append(head)
        for ev in events[1:]:
            session.events.append(ev)
            session.apply(ev)
        return session


def create_app(state_dir=".titepod-sessions") -> FastAPI:
    app = FastAPI(title="titepod conduct service")
    try:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
        )
    except ImportError:  # pragma: no cover - cors is optional plumbing
        pass
    store = SessionStore(state_dir)
    app.state.store = store

    @app.post("/sessions")
    def create_session(body: CreateSession):
        session = store.create(body)
        return {"id": session.id, "design": session.spec.name}

    @app.post("/sessions/{sid}/enrollments")
    def post_enrollment(sid: str, body: Enrollment):
        session = store.get(sid)
        with session.lock:
            if body.time < session.clock:
                raise HTTPException(422, detail={"code": "time-regression",
                                                 "message": "event time precedes the clock"})
            snap = session.snapshot_at(body.time)
            payload = _decision_payload(session, snap)
            recommended = payload["decision"]["level"]
            if payload["suspended"] and not body.override:
                raise HTTPException(409, detail={
                    "code": "suspended",
                    "message": "enrollment is suspended; pass override to force",
                })
            dose = body.dose if body.dose is not None else recommended
            if not 1 <= dose <= session.spec.levels:
                raise HTTPException(422, detail={"code": "bad-dose",
                                                 "message": f"dose {dose} out of range"})
            if dose != recommended and not body.override:
                raise HTTPException(409, detail={
                    "code": "off-recommendation",
                    "message": f"recommended dose is {recommended}; pass override to deviate",
                })
            event = {
                "type": "enroll",
                "time": body.time,
                "patient": len(session.patients),
                "dose": dose,
                "override": bool(body.override),
                "recommended": recommended,
            }
            store.record(session, event)
            return {"patient": event["patient"], "dose": dose, "clock": session.clock}

    @app.post("/sessions/{sid}/outcomes")
    def post_outcome(sid: str, body: Outcome):
        session = store.get(sid)
        with session.lock:
            if body.patient < 0 or body.patient >= len(session.patients):
                raise HTTPException(404, detail={"code": "unknown-patient",
                                                 "message": str(body.patient)})
            if body.time < session.clock:
                raise HTTPException(422, detail={"code": "time-regression",
                                                 "message": "event time precedes the clock"})
            if body.patient in session.resolved:
                raise HTTPException(409, detail={"code": "already-resolved",
                                                 "message": str(body.patient)})
            rec = session.patients[body.patient]
            window = session.spec.window
            if body.no_dlt:
                if body.time < rec.enroll_time + window - 1e-9:
                    raise HTTPException(422, detail={
                        "code": "window-incomplete",
                        "message": "no-DLT outcome requires the full assessment window",
                    })
                event = {"type": "outcome", "time": body.time,
                         "patient": body.patient, "dlt_day": None}
            else:
                if body.dlt_day is None:
                    raise HTTPException(422, detail={"code": "missing-outcome",
                                                     "message": "dlt_day or no_dlt required"})
                if not 0.0 < body.dlt_day <= window:
                    raise HTTPException(422, detail={
                        "code": "outside-window",
                        "message": "DLT day must lie inside the assessment window",
                    })
                if rec.enroll_time + body.dlt_day > body.time + 1e-9:
                    raise HTTPException(422, detail={
                        "code": "future-outcome",
                        "message": "DLT would occur after the event time",
                    })
                event = {"type": "outcome", "time": body.time,
                         "patient": body.patient, "dlt_day": body.dlt_day}
            store.record(session, event)
            snap = session.snapshot_at()
            tly = tally(snap, session.spec.levels)
            status = evaluate_safety(tly, session.spec.target, session.spec.rules())
            return {
                "patient": body.patient,
                "clock": session.clock,
                "excluded_from": status.excluded_from,
                "terminated": status.terminated,
                "trial_suspended": status.trial_suspended,
            }

    @app.get("/sessions/{sid}/recommendation")
    def get_recommendation(sid: str, at: Optional[float] = Query(default=None)):
        session = store.get(sid)
        with session.lock:
            snap = session.snapshot_at(at)
            return _decision_payload(session, snap)

    @app.post("/sessions/{sid}/what-if")
    def what_if(sid: str, body: WhatIf):
        session = store.get(sid)
        with session.lock:
            snap = session.snapshot_at(body.at)
            resolutions = {int(k): bool(v) for k, v in body.resolutions.items()}
            window = session.spec.window
            views = []
            for pid, view in enumerate(snap.patients):
                if view.assessed or pid not in resolutions:
                    views.append(view)
                elif resolutions[pid]:
                    # hypothetical DLT lands in the remaining follow-up
                    t = min((view.follow_up + window) / 2.0, window)
                    views.append(PatientView(view.dose, 1, t, True))
                else:
                    views.append(PatientView(view.dose, 0, window, True))
            hypothetical = Snapshot(snap.clock, window, tuple(views))
            return _decision_payload(session, hypothetical)

    @app.post("/sessions/{sid}/complete")
    def complete_trial(sid: str):
        session = store.get(sid)
        with session.lock:
            snap = session.snapshot_at()
            if snap.num_pending:
                raise HTTPException(409, detail={
                    "code": "pending-outcomes",
                    "message": f"{snap.num_pending} assessments still pending",
                })
            spec = session.spec
            tly = tally(snap, spec.levels)
            status = evaluate_safety(tly, spec.target, spec.rules())
            selected = select_mtd(
                selection_family(spec.name),
                tly.dlt,
                tly.clear,
                spec.target,
                spec.eps2,
                spec.rules().nu,
                terminated=status.terminated,
                crm_quad=getattr(session.engine, "quad", None),
                spm_model=getattr(session.engine, "spm", None),
            )
            return {
                "mtd": selected,
                "terminated": status.terminated,
                "tallies": [
                    {"dose": z, "dlt": tly.dlt[z - 1], "clear": tly.clear[z - 1]}
                    for z in range(1, spec.levels + 1)
                ],
            }

    @app.get("/sessions/{sid}/audit")
    def get_audit(sid: str):
        session = store.get(sid)
        with session.lock:
            return {"events": session.events}

    return app
