"""Time-to-event and probability-of-decision dose-finding designs.

Engines for TITE-CRM, TITE-BOIN, TITE-TPI, TITE-keyboard, TITE-SPM,
TITE-i3, POD-TPI and POD-CRM (plus their complete-data counterparts), a
discrete-event trial simulator with operating-characteristics reporting,
and an event-sourced trial-conduct service.
"""

from .config import DesignSpec, build_engine
from .core import Decision, DoseGrid, PatientRecord, Snapshot, snapshot, tally
from .scenarios import SCENARIOS, SETTINGS, Scenario, Setting
from .simulate import run_batch, run_trial

__all__ = [
    "Decision",
    "DesignSpec",
    "DoseGrid",
    "PatientRecord",
    "SCENARIOS",
    "SETTINGS",
    "Scenario",
    "Setting",
    "Snapshot",
    "build_engine",
    "run_batch",
    "run_trial",
    "snapshot",
    "tally",
]

__version__ = "0.1.0"
