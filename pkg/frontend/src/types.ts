// Shapes mirror the review-service JSON (snake_case preserved).

export interface QueueItem {
  pair_id: string;
  scope: "cross" | "intra";
  action: "Merge" | "Refine" | "KeepDistinct" | "AddCoverage";
  category: "High" | "Medium" | "Low" | "NoMatch";
  cosine: number;
  jaccard: number;
  left_id: string;
  left_text: string;
  right_id: string | null;
  right_text: string | null;
  rationale: string;
  testing_impact: string;
  requires_human: boolean;
  suggested_text: string | null;
  decided: boolean;
}

export interface SummaryRecord {
  cycle: number;
  mean_cosine: number;
  count_high: number;
  count_medium: number;
  count_low: number;
  count_no_match: number;
  mean_clarity: number;
  mean_completeness: number;
  mean_testability: number;
  mean_consistency: number;
  mean_semantic_alignment: number;
  forward_ops: number;
  reverse_ops: number;
  judge_ops: number;
}

export interface SessionSnapshot {
  session_id: string;
  project_id: string;
  cycle: number;
  status: "AwaitingReview" | "Running" | "Converged" | "CycleLimit";
  queue: QueueItem[];
  summary: SummaryRecord | null;
}

export interface SessionRow {
  session_id: string;
  project_id: string;
  cycle: number;
  status: string;
}

export interface RowsPayload {
  schema: string;
  version: number;
  rows: Record<string, unknown>[];
}

export interface ReportsBundle {
  cycle: number;
  semantic_results: RowsPayload;
  impact_analysis: RowsPayload;
  updated_requirements: RowsPayload;
  overall_summary: RowsPayload;
}

export interface DecisionOut {
  pair_id: string;
  verdict: string;
  edited_text: string | null;
  reviewer: string;
}

export interface ApiError {
  status: number;
  detail: string;
}
