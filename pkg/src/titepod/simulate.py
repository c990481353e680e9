"""Discrete-event trial simulator and operating-characteristics aggregation.

Candidate patients arrive by an exponential inter-arrival process.  A dose
decision is computed at the arrival of a cohort's first member from the
data available at that instant; the following arrivals fill the cohort at
the same dose.  Safety rules are checked first, then the suspension rule;
a suspended arrival is turned away (not queued) and the decision is
re-attempted at the next arrival.  Enrollment stops at the maximum sample
size or at safety termination; every enrolled patient is followed to the
end of the assessment window, and the trial duration runs to the last
assessment completion.

(engine, scenario, setting, seed) fully determines a trajectory.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .config import DesignSpec, build_engine, selection_family
from .core import PatientRecord, snapshot, tally
from .mtd import select_mtd
from .rules import (
    AuditCounts,
    DecisionEvent,
    audit_trial,
    coherence_violations,
    evaluate_safety,
    interval_coherence_violations,
    rule3_gate,
    should_suspend,
)
from .scenarios import Scenario, Setting, calibrate_weibull, true_mtd_set


@dataclass(frozen=True)
class TrialResult:
    selected: Optional[int]
    terminated: bool
    duration: float
    patients: tuple
    events: tuple
    audit: AuditCounts
    coherence: int
    interval_coherence: int
    turned_away: int

    def dlt_flags(self, window: float):
        return [
            rec.dlt_time is not None and rec.dlt_time <= window for rec in self.patients
        ]


def run_trial(spec: DesignSpec, sc: Scenario, st: Setting, seed: int, engine=None) -> TrialResult:
    """Simulate one trial to completion.

    The scenario owns the target rate: a spec whose target differs is
    re-anchored to the scenario's before the engine is built.
    """
    if len(sc.doses) != spec.levels:
        raise ValueError("scenario dose count does not match the design grid")
    if spec.target != sc.target:
        spec = replace(spec, target=sc.target)
        engine = None
    if engine is None:
        engine = build_engine(spec)
    rules = spec.rules()
    grid = engine.grid
    window = grid.window
    rng = np.random.default_rng(seed)
    weib = [calibrate_weibull(p, window, st.split_frac * window, st.late_fraction)
            if 0.0 < p < 1.0 else None
            for p in sc.doses]

    patients = []
    events = []
    cohort_size = spec.resolved_cohort()
    cohort_left = 0
    cohort_dose = 0
    terminated = False
    turned_away = 0
    t = 0.0
    first = True

    def draw_dlt_time(dose: int) -> Optional[float]:
        p = sc.doses[dose - 1]
        if p <= 0.0:
            return None
        if p >= 1.0:
            return window * (1.0 - rng.random())
        shape, scale = weib[dose - 1]
        u = rng.random()
        time = scale * (-math.log1p(-u)) ** (1.0 / shape)
        return time if time <= window else None

    def enroll(dose: int) -> None:
        patients.append(
            PatientRecord(len(patients), dose, t, draw_dlt_time(dose))
        )

    while len(patients) < spec.n_max:
        if first:
            first = False
        else:
            t += st.min_gap + rng.exponential(1.0 / st.accrual_rate)

        if not patients:
            # protocol start at the configured lowest dose; no engine call
            enroll(spec.start_dose)
            cohort_dose = spec.start_dose
            cohort_left = cohort_size - 1
            continue

        snap = snapshot(patients, t, window)
        tly = tally(snap, grid.levels)
        status = evaluate_safety(tly, grid.target, rules)
        if status.terminated:
            terminated = True
            break
        if status.trial_suspended:
            turned_away += 1
            continue
        if cohort_left > 0 and cohort_dose <= status.open_cap(grid.levels):
            enroll(cohort_dose)
            cohort_left -= 1
            continue

        # fresh decision instant
        cohort_left = 0
        current = patients[-1].dose
        out = engine.decide(snap, tly, current, rng)
        if should_suspend(rules.suspension, tly, current, out.pod):
            turned_away += 1
            continue
        raw = out.decision
        executed = raw
        firings = []
        if rules.rule3_enabled:
            gated = rule3_gate(executed, tly.clear[current - 1], current)
            if gated.level != executed.level:
                firings.append("rule3")
            executed = gated
        cap = status.open_cap(grid.levels)
        level = min(executed.level, cap)
        if level < executed.level:
            firings.append("exclusion-clamp")
        level = max(level, 1)
        events.append(
            DecisionEvent(
                time=t,
                current=current,
                raw=raw,
                executed_level=level,
                enrolled=len(patients),
                dlt_status=tuple(tly.dlt),
                rule_firings=tuple(firings),
            )
        )
        enroll(level)
        cohort_dose = level
        cohort_left = cohort_size - 1

    if terminated:
        duration = _termination_instant(patients, grid, rules)
    else:
        duration = max(
            (rec.enroll_time + (rec.dlt_time if rec.dlt_time is not None else window))
            for rec in patients
        )
    n_vec = [0] * grid.levels
    m_vec = [0] * grid.levels
    for rec in patients:
        if rec.dlt_time is not None and rec.dlt_time <= window:
            n_vec[rec.dose - 1] += 1
        else:
            m_vec[rec.dose - 1] += 1
    selected = select_mtd(
        selection_family(spec.name),
        n_vec,
        m_vec,
        grid.target,
        grid.eps2,
        rules.nu,
        terminated=terminated,
        crm_quad=getattr(engine, "quad", None),
        spm_model=getattr(engine, "spm", None),
    )
    audit = audit_trial(events, patients, engine, window)
    return TrialResult(
        selected=selected,
        terminated=terminated,
        duration=duration,
        patients=tuple(patients),
        events=tuple(events),
        audit=audit,
        coherence=coherence_violations(events),
        interval_coherence=interval_coherence_violations(events),
        turned_away=turned_away,
    )


def _termination_instant(patients, grid, rules) -> float:
    """Earliest resolution time at which the lowest dose is confirmed
    over-toxic on complete outcomes (the moment the trial stops)."""
    times = sorted(
        rec.enroll_time + (rec.dlt_time if rec.dlt_time is not None else grid.window)
        for rec in patients
    )
    for t in times:
        enrolled = [rec for rec in patients if rec.enroll_time <= t]
        snap = snapshot(enrolled, t, grid.window)
        status = evaluate_safety(tally(snap, grid.levels), grid.target, rules)
        if status.terminated:
            return t
    return times[-1]


# --- batch aggregation -------------------------------------------------------


@dataclass
class ScenarioAggregate:
    """Streaming sums for one scenario's operating characteristics."""

    trials: int = 0
    correct_sel: int = 0
    over_sel: int = 0
    patients: int = 0
    at_mtd: int = 0
    above_mtd: int = 0
    toxicities: int = 0
    duration_sum: float = 0.0
    duration_sq: float = 0.0
    audit: AuditCounts = field(default_factory=AuditCounts)
    coherence: int = 0
    interval_coherence: int = 0

    def add(self, res: TrialResult, sc: Scenario, window: float) -> None:
        mtd = true_mtd_set(sc)
        top = max(mtd) if mtd else 0
        self.trials += 1
        if mtd:
            self.correct_sel += int(res.selected in mtd)
        else:
            self.correct_sel += int(res.selected is None)
        self.over_sel += int(res.selected is not None and res.selected > top)
        self.patients += len(res.patients)
        self.at_mtd += sum(1 for rec in res.patients if rec.dose in mtd)
        self.above_mtd += sum(1 for rec in res.patients if rec.dose > top)
        self.toxicities += sum(res.dlt_flags(window))
        self.duration_sum += res.duration
        self.duration_sq += res.duration ** 2
        self.audit = self.audit.merged(res.audit)
        self.coherence += res.coherence
        self.interval_coherence += res.interval_coherence

    def merged(self, other: "ScenarioAggregate") -> "ScenarioAggregate":
        out = ScenarioAggregate()
        for name in (
            "trials",
            "correct_sel",
            "over_sel",
            "patients",
            "at_mtd",
            "above_mtd",
            "toxicities",
            "duration_sum",
            "duration_sq",
            "coherence",
            "interval_coherence",
        ):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.audit = self.audit.merged(other.audit)
        return out

    def metrics(self) -> "Metrics":
        n = max(self.trials, 1)
        np_ = max(self.patients, 1)
        pcs = 100.0 * self.correct_sel / n
        pca = 100.0 * self.at_mtd / np_
        pos = 100.0 * self.over_sel / n
        poa = 100.0 * self.above_mtd / np_
        pot = 100.0 * self.toxicities / np_
        dur = self.duration_sum / n
        dur_var = max(self.duration_sq / n - dur ** 2, 0.0)
        return Metrics(
            pcs=pcs,
            pca=pca,
            pos=pos,
            poa=poa,
            pot=pot,
            ds=self.audit.per_thousand("DS"),
            de=self.audit.per_thousand("DE"),
            se=self.audit.per_thousand("SE"),
            duration=dur,
            pcs_se=100.0 * math.sqrt(pcs / 100.0 * (1.0 - pcs / 100.0) / n),
            duration_se=math.sqrt(dur_var / n),
        )


@dataclass(frozen=True)
class Metrics:
    pcs: float
    pca: float
    pos: float
    poa: float
    pot: float
    ds: float
    de: float
    se: float
    duration: float
    pcs_se: float = 0.0
    duration_se: float = 0.0

    COLUMNS = ("PCS", "PCA", "POS", "POA", "POT", "DS", "DE", "SE", "Dur")

    def row(self):
        return (
            self.pcs,
            self.pca,
            self.pos,
            self.poa,
            self.pot,
            self.ds,
            self.de,
            self.se,
            self.duration,
        )


@dataclass(frozen=True)
class BatchResult:
    spec: DesignSpec
    setting: Setting
    scenario_names: tuple
    aggregates: tuple  # ScenarioAggregate per scenario

    def scenario_metrics(self):
        return [agg.metrics() for agg in self.aggregates]

    def averaged(self) -> Metrics:
        ms = self.scenario_metrics()
        k = len(ms)
        mean = lambda attr: sum(getattr(m, attr) for m in ms) / k
        return Metrics(
            pcs=mean("pcs"),
            pca=mean("pca"),
            pos=mean("pos"),
            poa=mean("poa"),
            pot=mean("pot"),
            ds=mean("ds"),
            de=mean("de"),
            se=mean("se"),
            duration=mean("duration"),
            pcs_se=math.sqrt(sum(m.pcs_se ** 2 for m in ms)) / k,
            duration_se=math.sqrt(sum(m.duration_se ** 2 for m in ms)) / k,
        )

    def total_aggregate(self) -> ScenarioAggregate:
        out = ScenarioAggregate()
        for agg in self.aggregates:
            out = out.merged(agg)
        return out


def _run_chunk(args):
    spec, sc, st, seeds = args
    if spec.target != sc.target:
        spec = replace(spec, target=sc.target)
    engine = build_engine(spec)
    agg = ScenarioAggregate()
    for seed in seeds:
        res = run_trial(spec, sc, st, seed, engine=engine)
        agg.add(res, sc, spec.window)
    return agg


def run_batch(
    spec: DesignSpec,
    scenarios: Sequence[Scenario],
    setting: Setting,
    n_sims: int,
    seed: int = 0,
    workers: int = 1,
    chunk: int = 250,
) -> BatchResult:
    """Replicate trials per scenario; per-trial seed = base + global trial
    index, so results are independent of worker scheduling."""
    jobs = []
    for si, sc in enumerate(scenarios):
        base = seed + si * n_sims
        seeds = list(range(base, base + n_sims))
        for lo in range(0, n_sims, chunk):
            jobs.append((spec, sc, setting, seeds[lo : lo + chunk]))
    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk_aggs = list(pool.map(_run_chunk, jobs, chunksize=1))
    else:
        chunk_aggs = [_run_chunk(job) for job in jobs]
    per_scenario = []
    j = 0
    for si, sc in enumerate(scenarios):
        agg = ScenarioAggregate()
        for lo in range(0, n_sims, chunk):
            agg = agg.merged(chunk_aggs[j])
            j += 1
        per_scenario.append(agg)
    return BatchResult(
        spec=spec,
        setting=setting,
        scenario_names=tuple(sc.name for sc in scenarios),
        aggregates=tuple(per_scenario),
    )


def metrics_table(batch: BatchResult) -> str:
    """Comma-separated table: one row per scenario plus the average, in the
    standard column order with Monte Carlo standard errors appended."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(("scenario",) + Metrics.COLUMNS + ("PCS_se", "Dur_se"))
    for name, m in zip(batch.scenario_names, batch.scenario_metrics()):
        writer.writerow((name,) + tuple(f"{x:.4f}" for x in m.row())
                        + (f"{m.pcs_se:.4f}", f"{m.duration_se:.4f}"))
    avg = batch.averaged()
    writer.writerow(("average",) + tuple(f"{x:.4f}" for x in avg.row())
                    + (f"{avg.pcs_se:.4f}", f"{avg.duration_se:.4f}"))
    return buf.getvalue()
