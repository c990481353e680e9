// Pure HTML renderers for the dashboard pieces. Keeping these as string
// functions makes the decision-display invariant directly testable: the
// card shows exactly what the service said, nothing computed locally.

import type { Recommendation } from "./api.js";
import type { LadderRow, PodBar, SwimlaneRow, ViewState } from "./state.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

export function renderRecommendationCard(state: ViewState): string {
  const banner = state.suspended
    ? `<div class="banner banner-suspended" data-testid="suspension-banner">Enrollment suspended</div>`
    : "";
  const firings = state.ruleFirings.length
    ? `<ul class="rule-firings">${state.ruleFirings
        .map((f) => `<li>${esc(f)}</li>`)
        .join("")}</ul>`
    : "";
  return `
<section class="card recommendation" data-testid="recommendation-card">
  ${banner}
  <h2 data-testid="decision-text">${esc(state.decisionText)}</h2>
  ${renderPodBars(state.podBars)}
  ${firings}
</section>`.trim();
}

export function renderPodBars(bars: PodBar[]): string {
  const rows = bars
    .map(
      (b) => `
    <div class="pod-row" data-testid="pod-row" data-level="${b.level}" data-percent="${b.percent}">
      <span class="pod-label">dose ${b.level}</span>
      <span class="pod-bar" style="width:${b.percent}%"></span>
      <span class="pod-value">${b.percent.toFixed(1)}%</span>
    </div>`,
    )
    .join("");
  return `<div class="pod-bars" data-testid="pod-bars">${rows}</div>`;
}

export function renderDoseLadder(rows: LadderRow[]): string {
  const cells = rows
    .map(
      (r) => `
  <tr class="ladder-${r.status}" data-testid="ladder-row" data-dose="${r.dose}">
    <td>${r.dose}</td><td>${r.treated}</td><td>${r.dlt}</td>
    <td>${r.clear}</td><td>${r.pending}</td><td>${r.status}</td>
  </tr>`,
    )
    .join("");
  return `
<table class="dose-ladder" data-testid="dose-ladder">
  <thead><tr><th>dose</th><th>N</th><th>DLT</th><th>clear</th><th>pending</th><th>status</th></tr></thead>
  <tbody>${cells}</tbody>
</table>`.trim();
}

export function renderSwimlane(rows: SwimlaneRow[], window: number): string {
  const lanes = rows
    .map((r) => {
      const width = Math.min((r.followedDays / window) * 100, 100);
      const marker =
        r.outcome === "dlt" ? "&#x2715;" : r.outcome === "clear" ? "&#x2713;" : "&#8230;";
      return `
  <div class="lane" data-testid="swimlane-row" data-patient="${r.patient}" data-outcome="${r.outcome}">
    <span class="lane-label">#${r.patient} @ dose ${r.dose}</span>
    <span class="lane-bar lane-${r.outcome}" style="width:${width.toFixed(1)}%"></span>
    <span class="lane-marker">${marker}</span>
  </div>`;
    })
    .join("");
  return `<div class="swimlane" data-testid="swimlane">${lanes}</div>`;
}

export function renderWhatIfOverlay(
  scenarios: { label: string; rec: Recommendation }[],
): string {
  const rows = scenarios
    .map(
      (s) => `
  <div class="what-if-row" data-testid="what-if-row" data-label="${esc(s.label)}">
    <span>${esc(s.label)}</span>
    <strong data-testid="what-if-decision">${esc(whatIfDecisionText(s.rec))}</strong>
  </div>`,
    )
    .join("");
  return `<div class="what-if-overlay" data-testid="what-if-overlay">${rows}</div>`;
}

function whatIfDecisionText(rec: Recommendation): string {
  return `${rec.decision.kind} -> dose ${rec.decision.level}`;
}

export function renderForms(levels: number): string {
  const options = Array.from({ length: levels }, (_, i) => i + 1)
    .map((d) => `<option value="${d}">${d}</option>`)
    .join("");
  return `
<form id="enroll-form" data-testid="enroll-form">
  <label>day <input name="time" type="number" step="0.1" required></label>
  <label>dose <select name="dose"><option value="">recommended</option>${options}</select></label>
  <label><input name="override" type="checkbox"> override</label>
  <button type="submit">Enroll</button>
</form>
<form id="outcome-form" data-testid="outcome-form">
  <label>patient <input name="patient" type="number" min="0" required></label>
  <label>day <input name="time" type="number" step="0.1" required></label>
  <label>DLT day <input name="dlt_day" type="number" step="0.1" placeholder="blank = no DLT"></label>
  <button type="submit">Record outcome</button>
</form>
<form id="what-if-form" data-testid="what-if-form">
  <button type="submit">Explore pending resolutions</button>
</form>`.trim();
}

export function renderDashboard(state: ViewState, levels: number): string {
  return `
<main class="dashboard">
  <header><h1>Trial conduct</h1><span data-testid="clock">day ${state.clock.toFixed(1)}</span></header>
  ${renderRecommendationCard(state)}
  ${renderDoseLadder(state.ladder)}
  ${renderSwimlane(state.swimlane, 28)}
  ${renderForms(levels)}
  <div id="what-if-slot"></div>
</main>`.trim();
}
