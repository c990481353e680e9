// View-state derivation: turns service payloads into the display model.
// All numbers shown to the coordinator come from the service verbatim;
// this layer only reshapes them (ladder rows, swimlane bars, POD bars).

import type { AuditEvent, PodEntry, Recommendation } from "./api.js";

export interface LadderRow {
  dose: number;
  treated: number;
  dlt: number;
  clear: number;
  pending: number;
  status: "current" | "open" | "excluded";
}

export interface SwimlaneRow {
  patient: number;
  dose: number;
  enrollDay: number;
  followedDays: number;
  outcome: "pending" | "dlt" | "clear";
  dltDay: number | null;
}

export interface PodBar {
  level: number;
  percent: number; // rounded to one decimal for display
}

export interface ViewState {
  decisionText: string;
  rawLevel: number;
  suspended: boolean;
  ruleFirings: string[];
  clock: number;
  ladder: LadderRow[];
  podBars: PodBar[];
  swimlane: SwimlaneRow[];
}

export function decisionText(rec: Recommendation): string {
  const { kind, level } = rec.decision;
  switch (kind) {
    case "escalate":
      return `Escalate to dose ${level}`;
    case "de-escalate":
      return `De-escalate to dose ${level}`;
    case "stay":
      return `Stay at dose ${level}`;
    default:
      return `Assign dose ${level}`;
  }
}

export function podBars(entries: PodEntry[]): PodBar[] {
  return entries
    .slice()
    .sort((a, b) => a.level - b.level)
    .map((e) => ({ level: e.level, percent: Math.round(e.prob * 1000) / 10 }));
}

export function ladderRows(rec: Recommendation): LadderRow[] {
  const exclusion = rec.rule_firings
    .map((f) => /^excluded-from-(\d+)$/.exec(f))
    .find((m) => m !== null);
  const bar = exclusion ? parseInt(exclusion[1], 10) : null;
  return rec.rationale.tallies.map((t) => ({
    dose: t.dose,
    treated: t.treated,
    dlt: t.dlt,
    clear: t.clear,
    pending: t.pending,
    status:
      bar !== null && t.dose >= bar
        ? "excluded"
        : t.dose === rec.rationale.current_dose
          ? "current"
          : "open",
  }));
}

export function swimlaneRows(events: AuditEvent[], clock: number, window: number): SwimlaneRow[] {
  const rows: SwimlaneRow[] = [];
  const outcomes = new Map<number, number | null>();
  for (const ev of events) {
    if (ev.type === "outcome") {
      outcomes.set(ev.patient as number, (ev.dlt_day as number | null) ?? null);
    }
  }
  for (const ev of events) {
    if (ev.type !== "enroll") continue;
    const patient = ev.patient as number;
    const enrollDay = ev.time as number;
    const followed = Math.min(Math.max(clock - enrollDay, 0), window);
    let outcome: SwimlaneRow["outcome"] = "pending";
    let dltDay: number | null = null;
    if (outcomes.has(patient)) {
      dltDay = outcomes.get(patient) ?? null;
      outcome = dltDay === null ? "clear" : "dlt";
    } else if (followed >= window) {
      outcome = "clear";
    }
    rows.push({
      patient,
      dose: ev.dose as number,
      enrollDay,
      followedDays: dltDay !== null ? dltDay : followed,
      outcome,
      dltDay,
    });
  }
  return rows;
}

export function buildViewState(
  rec: Recommendation,
  events: AuditEvent[],
  window: number,
): ViewState {
  return {
    decisionText: decisionText(rec),
    rawLevel: rec.raw_level,
    suspended: rec.suspended,
    ruleFirings: rec.rule_firings,
    clock: rec.rationale.clock,
    ladder: ladderRows(rec),
    podBars: podBars(rec.pod),
    swimlane: swimlaneRows(events, rec.rationale.clock, window),
  };
}
