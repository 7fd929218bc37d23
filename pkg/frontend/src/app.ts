// DOM wiring: polls the review service, renders state, relays events.

import { ApiClient, ApiFailure } from "./api.js";
import {
  ConsoleState,
  advanceFailed,
  applySnapshot,
  applyTrend,
  canAdvance,
  clearDraft,
  dismissBanner,
  initialState,
  markSubmitted,
  pendingDecisions,
  refinePrefill,
  setDraft,
  setFilter,
  setSort,
  submissionFailed,
  submissionSucceeded,
  SortKey,
} from "./store.js";
import { renderBanner, renderCycleBar, renderQueue, renderReports } from "./render.js";
import type { ReportsBundle, SummaryRecord } from "./types.js";

const params = new URLSearchParams(window.location.search);
const sessionId = params.get("session") ?? "";
const pollInterval = Number(params.get("poll") ?? "2000");
const api = new ApiClient(params.get("api") ?? "", null);

let state: ConsoleState = initialState();
let reports: ReportsBundle | null = null;

const bannerHost = document.getElementById("banner-host")!;
const cycleHost = document.getElementById("cycle-host")!;
const queueHost = document.getElementById("queue-host")!;
const reportsHost = document.getElementById("reports-host")!;

function render(): void {
  bannerHost.innerHTML = renderBanner(state);
  cycleHost.innerHTML = renderCycleBar(state);
  queueHost.innerHTML = renderQueue(state);
  reportsHost.innerHTML = renderReports(reports);
}

async function refresh(): Promise<void> {
  if (!sessionId) {
    state = { ...state, banner: "No session selected: add ?session=<id> to the URL." };
    render();
    return;
  }
  try {
    const snapshot = await api.getQueue(sessionId);
    state = applySnapshot(state, snapshot);
    if (snapshot.cycle >= 1) {
      const bundle = await api.getReports(sessionId, snapshot.cycle);
      reports = bundle;
      state = applyTrend(state, bundle.overall_summary.rows as unknown as SummaryRecord[]);
    }
  } catch (error) {
    if (error instanceof ApiFailure) {
      state = { ...state, banner: `Service error (${error.status}): ${error.detail}` };
    } else {
      state = { ...state, banner: `Service unreachable: ${String(error)}` };
    }
  }
  render();
}

async function submitDecisions(): Promise<void> {
  const decisions = pendingDecisions(state);
  if (!decisions.length) return;
  state = markSubmitted(state, decisions);
  render();
  try {
    await api.postDecisions(sessionId, decisions);
    state = submissionSucceeded(state, decisions);
  } catch (error) {
    if (error instanceof ApiFailure && (error.status === 409 || error.status === 422)) {
      state = submissionFailed(state, error.status, error.detail);
      await refresh();
      return;
    }
    state = { ...state, optimisticDecided: {}, banner: `Submit failed: ${String(error)}` };
  }
  await refresh();
}

async function advanceCycle(): Promise<void> {
  if (!canAdvance(state)) return;
  try {
    const snapshot = await api.advance(sessionId);
    state = applySnapshot(state, snapshot);
  } catch (error) {
    if (error instanceof ApiFailure) {
      state = advanceFailed(state, error.status, error.detail);
      await refresh();
      return;
    }
    state = { ...state, banner: `Advance failed: ${String(error)}` };
  }
  await refresh();
}

document.body.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  if (target.classList.contains("dismiss")) {
    state = dismissBanner(state);
    render();
  } else if (target.classList.contains("sort")) {
    state = setSort(state, target.dataset.sort as SortKey);
    render();
  } else if (target.classList.contains("verdict")) {
    const pairId = target.dataset.pair!;
    const verdict = target.dataset.verdict as
      | "Merge"
      | "Refine"
      | "KeepDistinct"
      | "AddCoverage";
    const item = state.snapshot?.queue.find((q) => q.pair_id === pairId);
    if (!item) return;
    if (state.drafts[pairId]?.verdict === verdict) {
      state = clearDraft(state, pairId);
    } else {
      state = setDraft(state, pairId, {
        verdict,
        editedText: verdict === "Refine" ? refinePrefill(item) : null,
      });
    }
    render();
  } else if (target.id === "submit-decisions") {
    void submitDecisions();
  } else if (target.id === "advance-cycle") {
    void advanceCycle();
  }
});

document.body.addEventListener("input", (event) => {
  const target = event.target as HTMLTextAreaElement;
  if (target.classList.contains("refine-editor")) {
    const pairId = target.dataset.pair!;
    const draft = state.drafts[pairId];
    if (draft) {
      state = setDraft(state, pairId, { ...draft, editedText: target.value });
    }
  } else if (target.classList.contains("action-filter")) {
    state = setFilter(state, (target as unknown as HTMLSelectElement).value);
    render();
  }
});

void refresh();
if (pollInterval > 0) {
  setInterval(() => {
    // do not clobber in-progress drafts mid-edit: polling only refreshes
    // when the reviewer has no focused editor
    if (!(document.activeElement instanceof HTMLTextAreaElement)) {
      void refresh();
    }
  }, pollInterval);
}
