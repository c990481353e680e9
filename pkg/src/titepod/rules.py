"""Safety rules, suspension rules, dose re-opening, and trial monitors.

Safety rules 1-2 quantify over-toxicity by the Beta(1,1) posterior
probability that a dose's DLT rate exceeds the target, evaluated on
completed outcomes only and activated once three outcomes at the dose are
assessed.  Dose status is recomputed from the current data at every
evaluation instant, which realizes re-opening after pending outcomes
resolve safely without extra bookkeeping.

The incompatibility audit and the coherence monitors compare raw design
decisions (pre rule-gating) so that rule clamps cannot masquerade as
design incoherence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from scipy import special

from .core import Decision, DoseTally
from .pod import PodDistribution


def excessive_toxicity_prob(n: int, m: int, target: float) -> float:
    """Pr(p > target | n DLT, m non-DLT) under the Beta(1,1) prior."""
    return float(1.0 - special.betainc(n + 1, m + 1, target))


@dataclass(frozen=True)
class SuspensionRule:
    """Enrollment gate.

    kinds: 'none'; 'complete' (block while any outcome is pending, the
    complete-data regime); 'fixed' (block when the current dose's pending
    count exceeds a threshold, or half its patients when proportional);
    'probability' (POD-based, versions 1-3).
    """

    kind: str = "none"
    threshold: Optional[float] = None  # fixed rule C; None = proportional N_d/2
    version: int = 1
    q: float = 0.0
    q_escalate: float = 0.0
    q_stay: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "complete", "fixed", "probability"):
            raise ValueError(f"unknown suspension kind {self.kind!r}")
        if self.kind == "probability" and self.version not in (1, 2, 3):
            raise ValueError("probability suspension version must be 1, 2 or 3")


@dataclass(frozen=True)
class RuleConfig:
    """Safety threshold, escalation gate, and suspension policy."""

    nu: float = 0.95
    suspension: SuspensionRule = field(default_factory=SuspensionRule)
    safety_enabled: bool = True
    rule3_enabled: bool = True

    def __post_init__(self):
        if not 0.5 < self.nu <= 1.0:
            raise ValueError("nu must lie in (0.5, 1]")


@dataclass(frozen=True)
class DoseStatus:
    """Exclusion bar plus trial-level termination/suspension flags.

    ``excluded_from`` is the lowest over-toxic dose; it and everything
    above are closed.  An over-toxic lowest dose terminates the trial when
    its outcomes are complete and suspends it while some are pending.
    """

    excluded_from: Optional[int]
    terminated: bool
    trial_suspended: bool

    def open_cap(self, levels: int) -> int:
        """Highest enrollable dose."""
        return levels if self.excluded_from is None else self.excluded_from - 1


def evaluate_safety(tly: DoseTally, target: float, cfg: RuleConfig) -> DoseStatus:
    """Safety rules 1 and 2 over the current tallies."""
    if not cfg.safety_enabled:
        return DoseStatus(None, False, False)
    bar = None
    for z in range(1, tly.levels + 1):
        _, n, m, _ = tly.at(z)
        if n + m >= 3 and excessive_toxicity_prob(n, m, target) > cfg.nu:
            bar = z
            break
    if bar == 1:
        pending_lowest = tly.pending[0] > 0
        return DoseStatus(1, not pending_lowest, pending_lowest)
    return DoseStatus(bar, False, False)


def rule3_gate(decision: Decision, m_current: int, current: int) -> Decision:
    """No escalation until the current dose has one confirmed non-DLT."""
    if decision.level > current and m_current < 1:
        return Decision.stay(current)
    return decision


def fixed_suspension(r_d: int, treated_d: int, rule: SuspensionRule) -> bool:
    cap = treated_d / 2.0 if rule.threshold is None else rule.threshold
    return r_d > cap


def prob_suspension(pod: PodDistribution, rule: SuspensionRule, current: int) -> bool:
    """POD-based suspension.

    v1 blocks when the mass on decisions more conservative than the chosen
    one exceeds q; v2 blocks unless the chosen decision is certain; v3
    applies separate thresholds to escalations and stays (de-escalation is
    never blocked).
    """
    a_star = pod.chosen.level
    conservative = pod.prob_below(a_star)
    if rule.version == 1:
        return conservative > rule.q
    if rule.version == 2:
        return pod.prob_of(a_star) < 1.0 - 1e-12
    if a_star > current:
        return conservative > rule.q_escalate
    if a_star == current:
        return conservative > rule.q_stay
    return False


def should_suspend(
    rule: SuspensionRule,
    tly: DoseTally,
    current: int,
    pod: Optional[PodDistribution],
) -> bool:
    if rule.kind == "none":
        return False
    if rule.kind == "complete":
        return sum(tly.pending) > 0
    treated, _, _, r_d = tly.at(current)
    if rule.kind == "fixed":
        return fixed_suspension(r_d, treated, rule)
    if pod is None:
        raise ValueError("probability suspension requires a POD distribution")
    return prob_suspension(pod, rule, current)


# --- incompatibility audit ---------------------------------------------------

AGGRESSIVE = ("DS", "DE", "SE")
CONSERVATIVE = ("SD", "ED", "ES")


@dataclass
class AuditCounts:
    """Mismatch tallies between real-time and complete-data decisions.

    Two-letter codes read <complete-data category><executed category>;
    DS/DE/SE are the aggressive mismatches.
    """

    decisions: int = 0
    counts: dict = field(default_factory=lambda: {c: 0 for c in AGGRESSIVE + CONSERVATIVE})

    def record(self, executed_cat: str, counterpart_cat: str) -> None:
        self.decisions += 1
        if executed_cat == counterpart_cat:
            return
        code = counterpart_cat + executed_cat
        if code in self.counts:
            self.counts[code] += 1

    def merged(self, other: "AuditCounts") -> "AuditCounts":
        out = AuditCounts(self.decisions + other.decisions)
        for k in out.counts:
            out.counts[k] = self.counts[k] + other.counts[k]
        return out

    def per_thousand(self, code: str) -> float:
        if self.decisions == 0:
            return 0.0
        return 1000.0 * self.counts[code] / self.decisions


@dataclass(frozen=True)
class DecisionEvent:
    """One executed dose-assignment decision, with enough state to replay
    the complete-data counterpart afterwards."""

    time: float
    current: int
    raw: Decision
    executed_level: int
    enrolled: int  # patients enrolled strictly before this decision
    dlt_status: tuple  # per-dose count of observed DLTs at decision time
    rule_firings: tuple = ()


def audit_trial(
    events: Sequence[DecisionEvent],
    patients,
    engine,
    window: float,
) -> AuditCounts:
    """Replay each decision with the eventual outcomes of the patients who
    were enrolled at the time, through the engine's complete-data
    counterpart, and classify mismatches of the raw decisions."""
    counts = AuditCounts()
    levels = engine.grid.levels
    for ev in events:
        n_vec = [0] * levels
        m_vec = [0] * levels
        for rec in patients[: ev.enrolled]:
            dlt = rec.dlt_time is not None and rec.dlt_time <= window
            if dlt:
                n_vec[rec.dose - 1] += 1
            else:
                m_vec[rec.dose - 1] += 1
        counterpart = engine.complete_decide(n_vec, m_vec, ev.current)
        counts.record(ev.raw.category(ev.current), counterpart.category(ev.current))
    return counts


def audit_log_lines(events: Sequence[DecisionEvent], engine_name: str):
    """One structured-text record per decision event, for audit files."""
    import hashlib
    import json

    lines = []
    for ev in events:
        digest = hashlib.sha1(
            json.dumps([ev.enrolled, list(ev.dlt_status)]).encode()
        ).hexdigest()[:12]
        lines.append(
            json.dumps(
                {
                    "time": ev.time,
                    "engine": engine_name,
                    "current_dose": ev.current,
                    "decision": ev.raw.kind.value,
                    "decision_level": ev.raw.level,
                    "executed_level": ev.executed_level,
                    "snapshot_digest": digest,
                    "rule_firings": list(ev.rule_firings),
                }
            )
        )
    return lines


# --- coherence monitors --------------------------------------------------------


def coherence_violations(events: Sequence[DecisionEvent]) -> int:
    """De-escalations between decision pairs with no new DLT observed
    anywhere in between (the time-to-event coherence condition)."""
    bad = 0
    for i in range(len(events)):
        for j in range(i + 1, len(events)):
            if sum(events[j].dlt_status) == sum(events[i].dlt_status):
                if events[j].raw.level < events[i].raw.level:
                    bad += 1
    return bad


def interval_coherence_violations(events: Sequence[DecisionEvent]) -> int:
    """De-escalations between decision pairs sharing the current dose with
    no new DLT at that dose in between."""
    bad = 0
    for i in range(len(events)):
        for j in range(i + 1, len(events)):
            if events[j].current != events[i].current:
                continue
            d = events[i].current - 1
            if events[j].dlt_status[d] == events[i].dlt_status[d]:
                if events[j].raw.level < events[i].raw.level:
                    bad += 1
    return bad
