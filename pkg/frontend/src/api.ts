// Typed client for the trial-conduct service. The dashboard never computes
// a dose decision itself; everything comes back from these endpoints.

export interface PodEntry {
  level: number;
  prob: number;
}

export interface DoseTallyRow {
  dose: number;
  treated: number;
  dlt: number;
  clear: number;
  pending: number;
}

export interface Recommendation {
  decision: { kind: string; level: number };
  raw_level: number;
  pod: PodEntry[];
  suspended: boolean;
  rule_firings: string[];
  rationale: {
    current_dose: number;
    clock: number;
    tallies: DoseTallyRow[];
    posterior_mean: number[];
  };
}

export interface AuditEvent {
  type: string;
  time: number;
  [key: string]: unknown;
}

export interface CompletionReport {
  mtd: number | null;
  terminated: boolean;
  tallies: { dose: number; dlt: number; clear: number }[];
}

export class ServiceError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function unwrap<T>(res: Response): Promise<T> {
  if (res.ok) {
    return (await res.json()) as T;
  }
  let code = "error";
  let message = `${res.status}`;
  try {
    const body = await res.json();
    if (body.detail) {
      code = body.detail.code ?? code;
      message = body.detail.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ServiceError(res.status, code, message);
}

export class ConductClient {
  constructor(private base: string) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  async createSession(design: string, config: object = {}, seed = 0): Promise<string> {
    const res = await fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ design, config, seed }),
    });
    const body = await unwrap<{ id: string }>(res);
    return body.id;
  }

  async enroll(
    sessionId: string,
    time: number,
    dose?: number,
    override = false,
  ): Promise<{ patient: number; dose: number; clock: number }> {
    const res = await fetch(this.url(`/sessions/${sessionId}/enrollments`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ time, dose: dose ?? null, override }),
    });
    return unwrap(res);
  }

  async reportOutcome(
    sessionId: string,
    patient: number,
    time: number,
    dltDay: number | null,
  ): Promise<object> {
    const body =
      dltDay === null
        ? { time, patient, no_dlt: true }
        : { time, patient, dlt_day: dltDay };
    const res = await fetch(this.url(`/sessions/${sessionId}/outcomes`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return unwrap(res);
  }

  async recommendation(sessionId: string, at?: number): Promise<Recommendation> {
    const query = at === undefined ? "" : `?at=${at}`;
    const res = await fetch(this.url(`/sessions/${sessionId}/recommendation${query}`));
    return unwrap(res);
  }

  async whatIf(
    sessionId: string,
    resolutions: Record<number, boolean>,
    at?: number,
  ): Promise<Recommendation> {
    const res = await fetch(this.url(`/sessions/${sessionId}/what-if`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ resolutions, at: at ?? null }),
    });
    return unwrap(res);
  }

  async complete(sessionId: string): Promise<CompletionReport> {
    const res = await fetch(this.url(`/sessions/${sessionId}/complete`), {
      method: "POST",
    });
    return unwrap(res);
  }

  async audit(sessionId: string): Promise<AuditEvent[]> {
    const res = await fetch(this.url(`/sessions/${sessionId}/audit`));
    const body = await unwrap<{ events: AuditEvent[] }>(res);
    return body.events;
  }
}
