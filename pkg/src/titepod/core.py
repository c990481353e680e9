"""Domain types for doses, patients, trial time, and observed-history snapshots.

Time is a real-valued day count since the enrollment of the first patient.
A patient who never experiences a dose-limiting toxicity (DLT) carries
``dlt_time=None``; sentinel numerics are never used.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence


@dataclass(frozen=True)
class DoseGrid:
    """Dose ladder plus the target-toxicity configuration shared by all designs.

    ``target`` is the target DLT probability; the equivalence interval is
    ``[target - eps1, target + eps2]``; ``window`` is the DLT assessment
    window in days.
    """

    levels: int
    target: float
    eps1: float = 0.05
    eps2: float = 0.05
    window: float = 28.0

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if not 0.0 < self.target < 1.0:
            raise ValueError("target must be in (0, 1)")
        if self.eps1 < 0.0 or self.eps2 < 0.0:
            raise ValueError("eps1/eps2 must be non-negative")
        if self.target - self.eps1 <= 0.0:
            raise ValueError("target - eps1 must be positive")
        if self.target + self.eps2 >= 1.0:
            raise ValueError("target + eps2 must be below 1")
        if self.window <= 0.0:
            raise ValueError("window must be positive")


@dataclass(frozen=True)
class PatientRecord:
    """Ground-truth record of one enrolled patient.

    ``dlt_time`` is measured from the patient's own enrollment; ``None``
    means no DLT ever occurs (simulator ground truth may also carry times
    beyond the assessment window, which likewise count as no DLT).
    """

    id: int
    dose: int
    enroll_time: float
    dlt_time: Optional[float] = None

    def __post_init__(self):
        if self.dose < 1:
            raise ValueError("dose levels are 1-based")
        if self.enroll_time < 0.0:
            raise ValueError("enroll_time must be non-negative")
        if self.dlt_time is not None and self.dlt_time <= 0.0:
            raise ValueError("dlt_time must be positive when present")


@dataclass(frozen=True)
class PatientView:
    """One patient's observable state at a snapshot clock time.

    ``status`` is the current DLT indicator, ``follow_up`` the observed
    follow-up time (min of time-to-DLT and censoring time), and ``assessed``
    flags a fully determined window outcome.
    """

    dose: int
    status: int
    follow_up: float
    assessed: bool


@dataclass(frozen=True)
class DoseTally:
    """Per-dose counts: treated N_z, DLT n_z, non-DLT m_z, pending r_z."""

    treated: tuple
    dlt: tuple
    clear: tuple
    pending: tuple

    @property
    def levels(self) -> int:
        return len(self.treated)

    def at(self, dose: int) -> tuple:
        """(N, n, m, r) for a 1-based dose level."""
        i = dose - 1
        return (self.treated[i], self.dlt[i], self.clear[i], self.pending[i])


@dataclass(frozen=True)
class Snapshot:
    """The observed trial history at clock time ``clock``."""

    clock: float
    window: float
    patients: tuple

    @property
    def size(self) -> int:
        return len(self.patients)

    @property
    def num_pending(self) -> int:
        return sum(1 for p in self.patients if not p.assessed)

    def pending_views(self, dose: Optional[int] = None):
        """Pending patients, optionally restricted to one dose."""
        return [
            p
            for p in self.patients
            if not p.assessed and (dose is None or p.dose == dose)
        ]


def snapshot(patients: Sequence[PatientRecord], clock: float, window: float) -> Snapshot:
    """Project ground-truth patient records onto what is observable at ``clock``.

    Censoring time is ``min(max(clock - enroll, 0), window)``; follow-up is
    the DLT time truncated at the censoring time; a patient is assessed once
    a DLT is observed or the full window has elapsed.
    """
    if clock < 0.0:
        raise ValueError("clock must be non-negative")
    views = []
    for rec in patients:
        if rec.enroll_time > clock:
            raise ValueError(f"patient {rec.id} enrolled after clock {clock}")
        u = min(max(clock - rec.enroll_time, 0.0), window)
        t = rec.dlt_time if rec.dlt_time is not None else math.inf
        v = min(t, u)
        status = 1 if t <= u else 0
        assessed = status == 1 or (status == 0 and v >= window)
        views.append(PatientView(rec.dose, status, v, assessed))
    return Snapshot(clock=clock, window=window, patients=tuple(views))


def tally(snap: Snapshot, levels: int) -> DoseTally:
    """Count DLT / non-DLT / pending outcomes per dose."""
    treated = [0] * levels
    dlt = [0] * levels
    clear = [0] * levels
    pend = [0] * levels
    for p in snap.patients:
        if not 1 <= p.dose <= levels:
            raise ValueError(f"dose {p.dose} outside 1..{levels}")
        i = p.dose - 1
        treated[i] += 1
        if p.assessed:
            if p.status == 1:
                dlt[i] += 1
            else:
                clear[i] += 1
        else:
            pend[i] += 1
    return DoseTally(tuple(treated), tuple(dlt), tuple(clear), tuple(pend))


class DecisionKind(Enum):
    ESCALATE = "escalate"
    STAY = "stay"
    DE_ESCALATE = "de-escalate"
    ASSIGN = "assign"
    SUSPEND = "suspend"
    TERMINATE = "terminate"


@dataclass(frozen=True)
class Decision:
    """A dose-finding decision together with the resulting dose level.

    Up/down moves are clamped to the dose grid; ``level`` is meaningless for
    SUSPEND/TERMINATE and set to the current dose by convention.
    """

    kind: DecisionKind
    level: int

    @staticmethod
    def escalate(current: int, levels: int) -> "Decision":
        return Decision(DecisionKind.ESCALATE, min(current + 1, levels))

    @staticmethod
    def stay(current: int) -> "Decision":
        return Decision(DecisionKind.STAY, current)

    @staticmethod
    def de_escalate(current: int) -> "Decision":
        return Decision(DecisionKind.DE_ESCALATE, max(current - 1, 1))

    @staticmethod
    def assign(level: int) -> "Decision":
        return Decision(DecisionKind.ASSIGN, level)

    def category(self, current: int) -> str:
        """'E'/'S'/'D' relative to the current dose (by resulting level)."""
        if self.level > current:
            return "E"
        if self.level < current:
            return "D"
        return "S"


# --- line-oriented serialization (one JSON object per line) ---------------


def record_to_json(rec: PatientRecord) -> str:
    return json.dumps(
        {
            "id": rec.id,
            "dose": rec.dose,
            "enroll_time": rec.enroll_time,
            "dlt_time": rec.dlt_time,
        }
    )


def record_from_json(line: str) -> PatientRecord:
    obj = json.loads(line)
    return PatientRecord(
        id=int(obj["id"]),
        dose=int(obj["dose"]),
        enroll_time=float(obj["enroll_time"]),
        dlt_time=None if obj.get("dlt_time") is None else float(obj["dlt_time"]),
    )


def snapshot_to_json(snap: Snapshot) -> str:
    return json.dumps(
        {
            "clock": snap.clock,
            "window": snap.window,
            "patients": [
                {
                    "dose": p.dose,
                    "status": p.status,
                    "follow_up": p.follow_up,
                    "assessed": p.assessed,
                }
                for p in snap.patients
            ],
        }
    )


def snapshot_from_json(line: str) -> Snapshot:
    obj = json.loads(line)
    return Snapshot(
        clock=float(obj["clock"]),
        window=float(obj["window"]),
        patients=tuple(
            PatientView(
                dose=int(p["dose"]),
                status=int(p["status"]),
                follow_up=float(p["follow_up"]),
                assessed=bool(p["assessed"]),
            )
            for p in obj["patients"]
        ),
    )


def write_records(path, records: Iterable[PatientRecord]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(record_to_json(rec) + "\n")


def read_records(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(record_from_json(line))
    return out
