// Pure console state. All data shown derives from service responses; the
// store only tracks the reviewer's unsubmitted drafts and UI chrome.

import type { DecisionOut, QueueItem, SessionSnapshot, SummaryRecord } from "./types.js";

export interface Draft {
  verdict: QueueItem["action"];
  editedText: string | null;
}

export type SortKey = "cosine" | "category";

export interface ConsoleState {
  snapshot: SessionSnapshot | null;
  drafts: Record<string, Draft>;
  optimisticDecided: Record<string, boolean>;
  markers: Record<string, string>; // pair_id -> marker label ("already decided")
  banner: string | null;
  needsRefetch: boolean;
  sortKey: SortKey;
  sortDescending: boolean;
  actionFilter: string; // "all" or an action name
  trend: SummaryRecord[];
  reviewer: string;
}

export function initialState(): ConsoleState {
  return {
    snapshot: null,
    drafts: {},
    optimisticDecided: {},
    markers: {},
    banner: null,
    needsRefetch: false,
    sortKey: "cosine",
    sortDescending: true,
    actionFilter: "all",
    trend: [],
    reviewer: "reviewer",
  };
}

const CATEGORY_ORDER: Record<QueueItem["category"], number> = {
  NoMatch: 0,
  Low: 1,
  Medium: 2,
  High: 3,
};

export function applySnapshot(state: ConsoleState, snapshot: SessionSnapshot): ConsoleState {
  const pairIds = new Set(snapshot.queue.map((item) => item.pair_id));
  const drafts: Record<string, Draft> = {};
  for (const [pairId, draft] of Object.entries(state.drafts)) {
    const item = snapshot.queue.find((q) => q.pair_id === pairId);
    if (item && !item.decided) drafts[pairId] = draft;
  }
  const markers: Record<string, string> = {};
  for (const [pairId, label] of Object.entries(state.markers)) {
    if (pairIds.has(pairId)) markers[pairId] = label;
  }
  return {
    ...state,
    snapshot,
    drafts,
    markers,
    optimisticDecided: {},
    needsRefetch: false,
  };
}

export function applyTrend(state: ConsoleState, rows: SummaryRecord[]): ConsoleState {
  return { ...state, trend: rows };
}

export function setDraft(state: ConsoleState, pairId: string, draft: Draft): ConsoleState {
  return { ...state, drafts: { ...state.drafts, [pairId]: draft } };
}

export function clearDraft(state: ConsoleState, pairId: string): ConsoleState {
  const drafts = { ...state.drafts };
  delete drafts[pairId];
  return { ...state, drafts };
}

export function setFilter(state: ConsoleState, actionFilter: string): ConsoleState {
  return { ...state, actionFilter };
}

export function setSort(state: ConsoleState, key: SortKey): ConsoleState {
  if (state.sortKey === key) {
    return { ...state, sortDescending: !state.sortDescending };
  }
  return { ...state, sortKey: key, sortDescending: true };
}

export function dismissBanner(state: ConsoleState): ConsoleState {
  return { ...state, banner: null };
}

export function isDecided(state: ConsoleState, item: QueueItem): boolean {
  return item.decided || state.optimisticDecided[item.pair_id] === true;
}

export function visibleQueue(state: ConsoleState): QueueItem[] {
  if (!state.snapshot) return [];
  let items = [...state.snapshot.queue];
  if (state.actionFilter !== "all") {
    items = items.filter((item) => item.action === state.actionFilter);
  }
  const direction = state.sortDescending ? -1 : 1;
  items.sort((a, b) => {
    const left = state.sortKey === "cosine" ? a.cosine : CATEGORY_ORDER[a.category];
    const right = state.sortKey === "cosine" ? b.cosine : CATEGORY_ORDER[b.category];
    if (left !== right) return direction * (left - right);
    return a.pair_id < b.pair_id ? -1 : 1;
  });
  return items;
}

/** Advance is legal only when every queue item is decided on the server
 * (or optimistically, pending confirmation) and the session awaits review. */
export function canAdvance(state: ConsoleState): boolean {
  if (!state.snapshot || state.snapshot.status !== "AwaitingReview") return false;
  return state.snapshot.queue.every((item) => isDecided(state, item));
}

export function pendingDecisions(state: ConsoleState): DecisionOut[] {
  if (!state.snapshot) return [];
  const out: DecisionOut[] = [];
  for (const item of state.snapshot.queue) {
    if (isDecided(state, item)) continue;
    const draft = state.drafts[item.pair_id];
    if (!draft) continue;
    out.push({
      pair_id: item.pair_id,
      verdict: draft.verdict,
      edited_text: draft.editedText,
      reviewer: state.reviewer,
    });
  }
  return out;
}

export function markSubmitted(state: ConsoleState, decisions: DecisionOut[]): ConsoleState {
  const optimistic = { ...state.optimisticDecided };
  for (const decision of decisions) optimistic[decision.pair_id] = true;
  return { ...state, optimisticDecided: optimistic };
}

export function submissionSucceeded(state: ConsoleState, decisions: DecisionOut[]): ConsoleState {
  const drafts = { ...state.drafts };
  for (const decision of decisions) delete drafts[decision.pair_id];
  return { ...state, drafts, banner: null };
}

/** Roll the optimistic flags back and, on a 409, mark the conflicting pair
 * "already decided" and schedule a refetch so the server view wins. */
export function submissionFailed(
  state: ConsoleState,
  status: number,
  detail: string,
): ConsoleState {
  const next: ConsoleState = {
    ...state,
    optimisticDecided: {},
    banner: `Submission rejected (${status}): ${detail}`,
    needsRefetch: true,
  };
  if (status === 409) {
    const match = detail.match(/pair id '([^']+)'/);
    if (match) {
      next.markers = { ...state.markers, [match[1]]: "already decided" };
    }
  }
  return next;
}

export function advanceFailed(state: ConsoleState, status: number, detail: string): ConsoleState {
  return {
    ...state,
    banner: `Advance rejected (${status}): ${detail}`,
    needsRefetch: true,
  };
}

/** Pre-fill for the Refine editor: the service's suggested wording, which is
 * the higher-scoring side of the pair. */
export function refinePrefill(item: QueueItem): string {
  return item.suggested_text ?? item.left_text;
}
