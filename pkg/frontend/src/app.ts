// Dashboard wiring: form submission handlers, polling refresh, and the
// what-if overlay. Handlers are plain functions over parsed form values so
// the round-trip tests can drive exactly the code the forms run.

import { ConductClient, Recommendation, ServiceError } from "./api.js";
import { buildViewState } from "./state.js";
import { renderDashboard, renderWhatIfOverlay } from "./render.js";

export interface EnrollFormValues {
  time: number;
  dose?: number; // omitted = take the service recommendation
  override?: boolean;
}

export interface OutcomeFormValues {
  patient: number;
  time: number;
  dltDay: number | null; // null = completed the window without DLT
}

export interface DashboardSession {
  client: ConductClient;
  sessionId: string;
  levels: number;
  window: number;
}

export async function refresh(session: DashboardSession, at?: number): Promise<string> {
  const rec = await session.client.recommendation(session.sessionId, at);
  const events = await session.client.audit(session.sessionId);
  const state = buildViewState(rec, events, session.window);
  return renderDashboard(state, session.levels);
}

export async function submitEnrollment(
  session: DashboardSession,
  values: EnrollFormValues,
): Promise<string> {
  await session.client.enroll(
    session.sessionId,
    values.time,
    values.dose,
    values.override ?? false,
  );
  return refresh(session);
}

export async function submitOutcome(
  session: DashboardSession,
  values: OutcomeFormValues,
): Promise<string> {
  await session.client.reportOutcome(
    session.sessionId,
    values.patient,
    values.time,
    values.dltDay,
  );
  return refresh(session);
}

export async function runWhatIf(
  session: DashboardSession,
  at?: number,
): Promise<{ html: string; branches: { label: string; rec: Recommendation }[] }> {
  const rec = await session.client.recommendation(session.sessionId, at);
  const pendingIds: number[] = [];
  const events = await session.client.audit(session.sessionId);
  const resolved = new Set(
    events.filter((e) => e.type === "outcome").map((e) => e.patient as number),
  );
  const clock = at ?? rec.rationale.clock;
  for (const ev of events) {
    if (ev.type !== "enroll") continue;
    const pid = ev.patient as number;
    if (!resolved.has(pid) && clock - (ev.time as number) < session.window) {
      pendingIds.push(pid);
    }
  }
  const allSafe = Object.fromEntries(pendingIds.map((p) => [p, false]));
  const allToxic = Object.fromEntries(pendingIds.map((p) => [p, true]));
  const branches = [
    { label: "all pending safe", rec: await session.client.whatIf(session.sessionId, allSafe, at) },
    { label: "all pending DLT", rec: await session.client.whatIf(session.sessionId, allToxic, at) },
  ];
  return { html: renderWhatIfOverlay(branches), branches };
}

function describeError(err: unknown): string {
  if (err instanceof ServiceError) {
    return `${err.code}: ${err.message}`;
  }
  return String(err);
}

// Browser bootstrap: attaches handlers and a slow poll (trial tempo is
// days, not milliseconds, so a coarse interval is plenty).
export function mount(root: HTMLElement, session: DashboardSession, pollMs = 15_000): void {
  const paint = (html: string) => {
    root.innerHTML = html;
    wireForms();
  };
  const showError = (err: unknown) => {
    const box = document.createElement("div");
    box.className = "banner banner-error";
    box.textContent = describeError(err);
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.onclick = () => void refresh(session).then(paint, showError);
    box.appendChild(retry);
    root.prepend(box);
  };

  function wireForms(): void {
    const enroll = root.querySelector<HTMLFormElement>("#enroll-form");
    enroll?.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const data = new FormData(enroll);
      const dose = data.get("dose");
      void submitEnrollment(session, {
        time: Number(data.get("time")),
        dose: dose ? Number(dose) : undefined,
        override: data.get("override") === "on",
      }).then(paint, showError);
    });
    const outcome = root.querySelector<HTMLFormElement>("#outcome-form");
    outcome?.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const data = new FormData(outcome);
      const dlt = data.get("dlt_day");
      void submitOutcome(session, {
        patient: Number(data.get("patient")),
        time: Number(data.get("time")),
        dltDay: dlt ? Number(dlt) : null,
      }).then(paint, showError);
    });
    const whatIf = root.querySelector<HTMLFormElement>("#what-if-form");
    whatIf?.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void runWhatIf(session).then(({ html }) => {
        const slot = root.querySelector("#what-if-slot");
        if (slot) slot.innerHTML = html;
      }, showError);
    });
  }

  void refresh(session).then(paint, showError);
  setInterval(() => void refresh(session).then(paint, showError), pollMs);
}
