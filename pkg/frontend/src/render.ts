// HTML-string renderers. Pure functions of state so they are testable
// without a DOM; app.ts assigns the output to innerHTML and delegates events.

import type { ConsoleState } from "./store.js";
import { canAdvance, isDecided, refinePrefill, visibleQueue } from "./store.js";
import type { QueueItem, ReportsBundle, RowsPayload } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const ACTIONS: QueueItem["action"][] = ["Merge", "Refine", "KeepDistinct", "AddCoverage"];

/** Entity/verb overlap chips, parsed out of the service rationale so the
 * console displays only service-provided terms. */
export function overlapChips(rationale: string): string[] {
  const chips: string[] = [];
  const entities = rationale.match(/shared entities \[([^\]]*)\]/);
  const verbs = rationale.match(/shared verbs \[([^\]]*)\]/);
  for (const [label, match] of [["entity", entities], ["verb", verbs]] as const) {
    if (!match) continue;
    for (const term of match[1].split(",").map((t) => t.trim())) {
      if (term && term !== "-") chips.push(`${label}:${term}`);
    }
  }
  return chips;
}

function verdictControls(item: QueueItem, state: ConsoleState): string {
  const draft = state.drafts[item.pair_id];
  const buttons = ACTIONS.map((action) => {
    const pressed = draft?.verdict === action ? " selected" : "";
    return (
      `<button class="verdict${pressed}" data-verdict="${action}" ` +
      `data-pair="${escapeHtml(item.pair_id)}">${action}</button>`
    );
  }).join("");
  const editor =
    draft?.verdict === "Refine"
      ? `<textarea class="refine-editor" data-pair="${escapeHtml(item.pair_id)}"` +
        ` rows="2">${escapeHtml(draft.editedText ?? refinePrefill(item))}</textarea>`
      : "";
  return `<div class="decision-panel">${buttons}${editor}</div>`;
}

export function renderQueueItem(item: QueueItem, state: ConsoleState): string {
  const decided = isDecided(state, item);
  const marker = state.markers[item.pair_id];
  const chips = overlapChips(item.rationale)
    .map((chip) => `<span class="chip">${escapeHtml(chip)}</span>`)
    .join("");
  const rightCell =
    item.right_id === null
      ? `<div class="segment missing">no counterpart</div>`
      : `<div class="segment"><span class="seg-id">${escapeHtml(item.right_id)}</span>` +
        `<p>${escapeHtml(item.right_text ?? "")}</p></div>`;
  return `
<article class="queue-item category-${item.category.toLowerCase()}${decided ? " decided" : ""}"
         data-pair="${escapeHtml(item.pair_id)}">
  <header>
    <span class="badge badge-${item.category.toLowerCase()}">${item.category}</span>
    <span class="action">suggested: ${item.action}</span>
    <span class="cosine">cosine ${item.cosine}</span>
    <span class="jaccard">jaccard ${item.jaccard}</span>
    ${item.requires_human ? '<span class="needs-human">needs review</span>' : ""}
    ${marker ? `<span class="marker">${escapeHtml(marker)}</span>` : ""}
    ${decided ? '<span class="decided-flag">decided</span>' : ""}
  </header>
  <div class="pair">
    <div class="segment"><span class="seg-id">${escapeHtml(item.left_id)}</span>
    <p>${escapeHtml(item.left_text)}</p></div>
    ${rightCell}
  </div>
  <p class="rationale">${escapeHtml(item.rationale)}</p>
  <p class="impact">${escapeHtml(item.testing_impact)}</p>
  <div class="chips">${chips}</div>
  ${decided ? "" : verdictControls(item, state)}
</article>`;
}

export function renderQueue(state: ConsoleState): string {
  if (!state.snapshot) return `<p class="empty">No session loaded.</p>`;
  const items = visibleQueue(state);
  const filters = ["all", ...ACTIONS]
    .map(
      (action) =>
        `<option value="${action}"${state.actionFilter === action ? " selected" : ""}>` +
        `${action}</option>`,
    )
    .join("");
  const rows = items.map((item) => renderQueueItem(item, state)).join("\n");
  const body = items.length ? rows : `<p class="empty">Queue is empty.</p>`;
  return `
<div class="queue-controls">
  <button class="sort" data-sort="cosine">sort by cosine</button>
  <button class="sort" data-sort="category">sort by category</button>
  <label>filter <select class="action-filter">${filters}</select></label>
</div>
<div class="queue-list">${body}</div>`;
}

export function renderCycleBar(state: ConsoleState): string {
  const snapshot = state.snapshot;
  if (!snapshot) return "";
  const summary = snapshot.summary;
  const trend = state.trend
    .map((row) => `<span class="trend-point">c${row.cycle}: ${row.mean_cosine}</span>`)
    .join(" ");
  const rubric = summary
    ? `clarity ${summary.mean_clarity} | completeness ${summary.mean_completeness} | ` +
      `testability ${summary.mean_testability} | consistency ${summary.mean_consistency} | ` +
      `alignment ${summary.mean_semantic_alignment}`
    : "";
  const advanceDisabled = canAdvance(state) ? "" : " disabled";
  return `
<div class="cycle-bar status-${snapshot.status.toLowerCase()}">
  <span class="cycle-no">cycle ${snapshot.cycle}</span>
  <span class="status">${snapshot.status}</span>
  <span class="trend">${trend}</span>
  <span class="rubric">${rubric}</span>
  <button id="submit-decisions">Submit decisions</button>
  <button id="advance-cycle"${advanceDisabled}>Advance cycle</button>
</div>`;
}

export function renderBanner(state: ConsoleState): string {
  if (!state.banner) return "";
  return (
    `<div class="banner" role="alert">${escapeHtml(state.banner)}` +
    `<button class="dismiss">dismiss</button></div>`
  );
}

function renderTable(title: string, payload: RowsPayload): string {
  if (!payload.rows.length) {
    return `<section class="report"><h3>${escapeHtml(title)}</h3><p class="empty">no rows</p></section>`;
  }
  const columns = Object.keys(payload.rows[0]);
  const head = columns.map((c) => `<th>${escapeHtml(c)}</th>`).join("");
  const body = payload.rows
    .map(
      (row) =>
        `<tr>${columns
          .map((c) => `<td>${escapeHtml(String(row[c] ?? ""))}</td>`)
          .join("")}</tr>`,
    )
    .join("\n");
  return `
<section class="report">
  <h3>${escapeHtml(title)} <small>(${payload.schema} v${payload.version})</small></h3>
  <table><thead><tr>${head}</tr></thead><tbody>${body}</tbody></table>
</section>`;
}

export function renderReports(bundle: ReportsBundle | null): string {
  if (!bundle) return `<p class="empty">No reports loaded.</p>`;
  return [
    `<h2>Reports for cycle ${bundle.cycle}</h2>`,
    renderTable("Semantic results", bundle.semantic_results),
    renderTable("Impact analysis", bundle.impact_analysis),
    renderTable("Updated requirements", bundle.updated_requirements),
    renderTable("Overall summary", bundle.overall_summary),
  ].join("\n");
}
