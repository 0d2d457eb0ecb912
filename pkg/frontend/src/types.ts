/** Payload types of the review service API (see docs/review_api.md). */

export interface PairRecord {
  pair_id: string;
  sample_id: string;
  model_id: string;
  chosen_run: number;
  rejected_run: number;
  chosen_ed: number;
  rejected_ed: number;
  status: string;
  reviewer: string | null;
  decided_at: string | null;
  edited_text: string | null;
  mined_at: string;
}

export interface FrameRef {
  scenario_id: string;
  step: number;
  path: string | null;
}

export interface SampleContext {
  sample_id: string;
  room: string;
  num_humans: number;
  frame_refs: FrameRef[];
  scene_graph: string;
  gt_text: string;
  horizon: number;
}

export interface ResponseRecord {
  run_index: number;
  raw_text: string;
  parsed_text: string | null;
  flags: string[];
  error: string | null;
  edit_distance: number | null;
}

export interface ReviewContext {
  pair: PairRecord;
  sample: SampleContext;
  responses: ResponseRecord[];
}

export interface PairPage {
  total: number;
  page: number;
  page_size: number;
  items: ReviewContext[];
}

export interface Stats {
  total: number;
  by_status: Record<string, number>;
  by_reviewer: Record<string, number>;
}

export type Decision = "approve" | "swap" | "edit" | "reject";

export interface DecisionResult {
  pair: PairRecord;
  replayed: boolean;
}
