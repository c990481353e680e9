import { describe, expect, it } from "vitest";

import type { Recommendation } from "../src/api.js";
import { buildViewState, decisionText, ladderRows, podBars, swimlaneRows } from "../src/state.js";
import {
  renderDashboard,
  renderDoseLadder,
  renderPodBars,
  renderRecommendationCard,
} from "../src/render.js";

function sampleRecommendation(overrides: Partial<Recommendation> = {}): Recommendation {
  return {
    decision: { kind: "de-escalate", level: 1 },
    raw_level: 1,
    pod: [
      { level: 1, prob: 0.8124 },
      { level: 2, prob: 0.1876 },
    ],
    suspended: false,
    rule_firings: [],
    rationale: {
      current_dose: 2,
      clock: 80,
      tallies: [
        { dose: 1, treated: 3, dlt: 0, clear: 3, pending: 0 },
        { dose: 2, treated: 3, dlt: 1, clear: 2, pending: 0 },
        { dose: 3, treated: 0, dlt: 0, clear: 0, pending: 0 },
      ],
      posterior_mean: [0.12, 0.33, 0.5],
    },
    ...overrides,
  };
}

describe("decision card", () => {
  it("shows the service decision verbatim, no local logic", () => {
    const state = buildViewState(sampleRecommendation(), [], 28);
    const html = renderRecommendationCard(state);
    expect(html).toContain("De-escalate to dose 1");
    expect(decisionText(sampleRecommendation())).toBe("De-escalate to dose 1");
  });

  it("shows the suspension banner exactly when the service flags it", () => {
    const on = buildViewState(sampleRecommendation({ suspended: true }), [], 28);
    const off = buildViewState(sampleRecommendation(), [], 28);
    expect(renderRecommendationCard(on)).toContain("suspension-banner");
    expect(renderRecommendationCard(off)).not.toContain("suspension-banner");
  });
});

describe("pod bars", () => {
  it("sum to 100 within rounding", () => {
    const bars = podBars(sampleRecommendation().pod);
    const total = bars.reduce((acc, b) => acc + b.percent, 0);
    expect(Math.abs(total - 100)).toBeLessThanOrEqual(0.5);
  });

  it("render one row per candidate level, sorted", () => {
    const html = renderPodBars(podBars(sampleRecommendation().pod));
    const rows = html.match(/data-testid="pod-row"/g) ?? [];
    expect(rows).toHaveLength(2);
    expect(html.indexOf('data-level="1"')).toBeLessThan(html.indexOf('data-level="2"'));
  });
});

describe("dose ladder", () => {
  it("mirrors the service tallies and marks the current dose", () => {
    const rows = ladderRows(sampleRecommendation());
    expect(rows[1].status).toBe("current");
    expect(rows[0]).toMatchObject({ treated: 3, dlt: 0, clear: 3, pending: 0 });
    const html = renderDoseLadder(rows);
    expect(html).toContain('data-dose="2"');
    expect(html).toContain("ladder-current");
  });

  it("marks excluded doses from the rule firings", () => {
    const rec = sampleRecommendation({ rule_firings: ["excluded-from-3"] });
    const rows = ladderRows(rec);
    expect(rows[2].status).toBe("excluded");
  });
});

describe("swimlane", () => {
  const events = [
    { type: "create", time: 0 },
    { type: "enroll", time: 0, patient: 0, dose: 1 },
    { type: "enroll", time: 7, patient: 1, dose: 1 },
    { type: "outcome", time: 21, patient: 0, dlt_day: 21 },
  ];

  it("derives one lane per patient with outcome markers", () => {
    const rows = swimlaneRows(events as never, 22, 28);
    expect(rows).toHaveLength(2);
    expect(rows[0].outcome).toBe("dlt");
    expect(rows[0].followedDays).toBe(21);
    expect(rows[1].outcome).toBe("pending");
    expect(rows[1].followedDays).toBe(15);
  });

  it("auto-clears lanes past the full window", () => {
    const rows = swimlaneRows(events as never, 7 + 28, 28);
    expect(rows[1].outcome).toBe("clear");
  });
});

describe("dashboard", () => {
  it("renders every section", () => {
    const state = buildViewState(sampleRecommendation(), [], 28);
    const html = renderDashboard(state, 3);
    for (const piece of [
      "recommendation-card",
      "dose-ladder",
      "swimlane",
      "enroll-form",
      "outcome-form",
      "what-if-form",
    ]) {
      expect(html).toContain(piece);
    }
  });
});
