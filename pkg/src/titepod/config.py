"""Run configuration: design specs, defaults, and YAML loading.

Defaults mirror the standard specification set: safety threshold 0.95,
equivalence half-widths 0.05, BOIN thresholds at 0.6/1.4 times the target,
a power-model skeleton anchored at the middle dose with prior sd 1.34, and
per-design time-to-toxicity models and suspension rules.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import yaml

from .core import DoseGrid
from .designs import IntervalPartition, SpmModel, boin_boundaries
from .engines import (
    BoinEngine,
    CrmEngine,
    Engine,
    I3Engine,
    KeyboardEngine,
    Mtpi2Engine,
    SpmEngine,
    TiteBoinEngine,
    TiteCrmEngine,
    TiteI3Engine,
    TiteKeyboardEngine,
    TiteSpmEngine,
    TiteTpiEngine,
)
from .inference import CrmCurve, power_model_skeleton
from .pod import PodCrmEngine, PodIntervalEngine
from .rules import RuleConfig, SuspensionRule
from .weights import build_tox_model

COMPLETE_DESIGNS = ("mtpi2", "boin", "keyboard", "i3", "crm", "spm")
TITE_DESIGNS = ("tite-crm", "tite-boin", "tite-tpi", "tite-keyboard", "tite-spm", "tite-i3")
POD_DESIGNS = ("pod-tpi", "pod-crm", "pod-boin", "pod-keyboard", "pod-i3", "pod-spm")

# per-design time-to-toxicity defaults; the TPI family pools DLT times into
# a 3-piece piecewise-uniform model, the rest use the uniform model
_DEFAULT_TOX = {
    "tite-crm": "uniform",
    "tite-boin": "uniform",
    "tite-i3": "uniform",
    "tite-tpi": "piecewise-uniform",
    "tite-keyboard": "piecewise-uniform",
    "tite-spm": "piecewise-uniform",
    "pod-tpi": "piecewise-uniform",
    "pod-crm": "uniform",
    "pod-boin": "uniform",
    "pod-keyboard": "piecewise-uniform",
    "pod-i3": "uniform",
    "pod-spm": "piecewise-uniform",
}


@dataclass(frozen=True)
class DesignSpec:
    """Everything needed to build an engine and its trial-conduct rules."""

    name: str
    levels: int = 7
    target: float = 0.2
    eps1: float = 0.05
    eps2: float = 0.05
    window: float = 28.0
    start_dose: int = 1
    # BOIN thresholds as multiples of the target
    p_lo_factor: float = 0.6
    p_hi_factor: float = 1.4
    # CRM / SPM curve
    skeleton: Optional[tuple] = None
    skeleton_anchor: Optional[int] = None
    prior_sd: float = 1.34
    spm_c: float = 2.0
    # time-to-toxicity model
    tox_kind: Optional[str] = None
    tox_pieces: int = 3
    tox_params: Optional[tuple] = None
    # POD options
    mle_plugin: bool = False
    # conduct
    cohort: Optional[int] = None
    nu: float = 0.95
    suspension: Optional[SuspensionRule] = None
    safety_enabled: bool = True
    n_max: int = 36

    def grid(self) -> DoseGrid:
        return DoseGrid(self.levels, self.target, self.eps1, self.eps2, self.window)

    def resolved_skeleton(self) -> tuple:
        if self.skeleton is not None:
            return tuple(self.skeleton)
        anchor = self.skeleton_anchor or (self.levels + 1) // 2 + (self.levels % 2 == 0)
        return power_model_skeleton(self.target, self.levels, int(anchor))

    def resolved_tox_kind(self) -> str:
        if self.tox_kind is not None:
            return self.tox_kind
        return _DEFAULT_TOX.get(self.name, "uniform")

    def resolved_cohort(self) -> int:
        if self.cohort is not None:
            return self.cohort
        return 1 if self.name in ("tite-crm", "pod-crm", "crm") else 3

    def resolved_suspension(self) -> SuspensionRule:
        if self.suspension is not None:
            return self.suspension
        if self.name in COMPLETE_DESIGNS:
            return SuspensionRule(kind="complete")
        if self.name.startswith("pod-"):
            return SuspensionRule(kind="probability", version=1, q=0.0)
        return SuspensionRule(kind="fixed", threshold=None)  # r_d > N_d / 2

    def rules(self) -> RuleConfig:
        return RuleConfig(
            nu=self.nu,
            suspension=self.resolved_suspension(),
            safety_enabled=self.safety_enabled,
        )


def build_engine(spec: DesignSpec) -> Engine:
    grid = spec.grid()
    partition = IntervalPartition.build(spec.target, spec.eps1, spec.eps2)
    tox = build_tox_model(
        spec.resolved_tox_kind(), spec.window, spec.tox_pieces, spec.tox_params
    )
    name = spec.name
    if name == "mtpi2":
        return Mtpi2Engine(grid, partition)
    if name == "keyboard":
        return KeyboardEngine(grid, partition)
    if name == "boin":
        bounds = boin_boundaries(
            spec.target, spec.p_lo_factor * spec.target, spec.p_hi_factor * spec.target
        )
        return BoinEngine(grid, bounds)
    if name == "i3":
        return I3Engine(grid, partition)
    if name == "crm":
        return CrmEngine(grid, CrmCurve(spec.resolved_skeleton(), spec.prior_sd))
    if name == "spm":
        model = SpmModel.from_skeleton(spec.resolved_skeleton(), partition, spec.spm_c)
        return SpmEngine(grid, model)
    if name == "tite-crm":
        return TiteCrmEngine(grid, CrmCurve(spec.resolved_skeleton(), spec.prior_sd), tox)
    if name == "tite-boin":
        bounds = boin_boundaries(
            spec.target, spec.p_lo_factor * spec.target, spec.p_hi_factor * spec.target
        )
        return TiteBoinEngine(grid, bounds, tox)
    if name == "tite-tpi":
        return TiteTpiEngine(grid, partition, tox)
    if name == "tite-keyboard":
        return TiteKeyboardEngine(grid, partition, tox)
    if name == "tite-i3":
        return TiteI3Engine(grid, partition, tox)
    if name == "tite-spm":
        model = SpmModel.from_skeleton(spec.resolved_skeleton(), partition, spec.spm_c)
        return TiteSpmEngine(grid, model, tox)
    if name == "pod-crm":
        base = CrmEngine(grid, CrmCurve(spec.resolved_skeleton(), spec.prior_sd))
        return PodCrmEngine(grid, base.quad, tox)
    if name.startswith("pod-"):
        base_spec = dataclasses.replace(spec, name=_pod_base(name))
        base = build_engine(base_spec)
        return PodIntervalEngine(grid, base, tox, mle_plugin=spec.mle_plugin, name=name)
    raise ValueError(f"unknown design name {name!r}")


def _pod_base(name: str) -> str:
    base = name[len("pod-") :]
    if base == "tpi":
        base = "mtpi2"
    if base not in ("mtpi2", "boin", "keyboard", "i3"):
        raise ValueError(f"no POD wrapper for base design {base!r}")
    return base


def selection_family(name: str) -> str:
    """Complete-data family whose MTD selection rule a design inherits."""
    base = name
    if base.startswith("tite-"):
        base = base[len("tite-") :]
    elif base.startswith("pod-"):
        base = base[len("pod-") :]
    if base == "tpi":
        base = "mtpi2"
    return base


def suspension_from_text(text: str) -> SuspensionRule:
    """Parse shorthand: none | complete | fixed:<C|half> | prob:<q> |
    prob2 | prob3:<q1>:<q2>."""
    parts = text.split(":")
    head = parts[0]
    if head == "none":
        return SuspensionRule(kind="none")
    if head == "complete":
        return SuspensionRule(kind="complete")
    if head == "fixed":
        arg = parts[1] if len(parts) > 1 else "half"
        thr = None if arg == "half" else float(arg)
        return SuspensionRule(kind="fixed", threshold=thr)
    if head == "prob":
        q = float(parts[1]) if len(parts) > 1 else 0.0
        return SuspensionRule(kind="probability", version=1, q=q)
    if head == "prob2":
        return SuspensionRule(kind="probability", version=2)
    if head == "prob3":
        q1 = float(parts[1]) if len(parts) > 1 else 0.0
        q2 = float(parts[2]) if len(parts) > 2 else 0.0
        return SuspensionRule(kind="probability", version=3, q_escalate=q1, q_stay=q2)
    raise ValueError(f"cannot parse suspension rule {text!r}")


def spec_from_mapping(design: str, mapping: dict) -> DesignSpec:
    """Build a DesignSpec from a nested config mapping (YAML layout)."""
    mapping = mapping or {}
    d = dict(mapping.get("design", {}))
    tox = dict(mapping.get("tox_model", {}))
    rules = dict(mapping.get("rules", {}))
    kwargs = {"name": design}
    for key in (
        "levels",
        "target",
        "eps1",
        "eps2",
        "window",
        "start_dose",
        "p_lo_factor",
        "p_hi_factor",
        "prior_sd",
        "spm_c",
        "mle_plugin",
        "cohort",
        "n_max",
    ):
        if key in d:
            kwargs[key] = d[key]
    if "skeleton" in d and d["skeleton"] is not None:
        kwargs["skeleton"] = tuple(d["skeleton"])
    if "kind" in tox:
        kwargs["tox_kind"] = tox["kind"]
    if "K" in tox:
        kwargs["tox_pieces"] = int(tox["K"])
    if "prior" in tox and tox["prior"] is not None:
        kwargs["tox_params"] = tuple(tox["prior"])
    if "nu" in rules:
        kwargs["nu"] = float(rules["nu"])
    if "safety" in rules:
        kwargs["safety_enabled"] = bool(rules["safety"])
    if "suspension" in rules:
        kwargs["suspension"] = suspension_from_text(str(rules["suspension"]))
    if "cohort" in rules:
        kwargs["cohort"] = int(rules["cohort"])
    return DesignSpec(**kwargs)


def load_config(path) -> dict:
    with open(path) as fh:
        return yaml.safe_load(fh) or {}


def load_scenario_file(path):
    """Scenario document: mapping with `doses` and `target` (or a list of
    such mappings)."""
    from .scenarios import Scenario

    with open(path) as fh:
        doc = yaml.safe_load(fh)
    docs = doc if isinstance(doc, list) else [doc]
    out = []
    for i, entry in enumerate(docs):
        out.append(
            Scenario(
                name=str(entry.get("name", f"scenario{i + 1}")),
                doses=tuple(float(x) for x in entry["doses"]),
                target=float(entry["target"]),
            )
        )
    return out
