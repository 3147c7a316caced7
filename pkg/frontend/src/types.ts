/** Payload shapes returned by the session REST API (single source of truth). */

export interface ScorecardPayload {
  /** Per-criterion scores in [0,1] plus a `total` key on the 0-5 scale. */
  [criterion: string]: number;
}

export interface JudgmentPayload {
  choice: "answer1" | "answer2";
  selected_text: string;
  selected_score: number;
  unselected_score: number;
  rationale: string;
  scorecards: { answer1: ScorecardPayload; answer2: ScorecardPayload };
  order_used: "as_given" | "swapped";
  tiebreak_applied: boolean;
}

export interface CandidatesPayload {
  answer1: string;
  answer2: string;
  viewpoint1: string;
  viewpoint2: string;
  prompt_fingerprint: string;
}

export interface OverridePayload {
  chosen: "answer1" | "answer2" | "external";
  note: string;
  text: string | null;
  created_at: number;
}

export interface ExchangePayload {
  question: string;
  candidates: CandidatesPayload;
  judgment: JudgmentPayload;
  override: OverridePayload | null;
  override_history: OverridePayload[];
  created_at: number;
}

export interface QualityAssessmentPayload {
  dimension_scores: Record<string, number>;
  weights: Record<string, number>;
  aggregate: number;
  reasoning: string;
  suggestions: string;
  threshold: number;
  passed: boolean;
}

export interface CaptionIterationPayload {
  caption: string;
  assessment: QualityAssessmentPayload;
  critique: string | null;
  banned_hits: { term: string; category: string; span: [number, number] }[];
}

export interface CaptionTracePayload {
  iterations: CaptionIterationPayload[];
  accepted_index: number;
  converged: boolean;
  iterations_used: number;
  residual_hits: boolean;
}

export interface SessionPayload {
  session_id: string;
  image: string;
  caption_trace: CaptionTracePayload | null;
  exchanges: ExchangePayload[];
  created_at: number;
}

export interface SessionCreatedPayload {
  session_id: string;
  image: string;
}

export interface AskResponsePayload {
  session_id: string;
  index: number;
  caption: string;
  caption_score: number;
  caption_dimension_scores: Record<string, number>;
  caption_recomputed: boolean;
  exchange: ExchangePayload;
}

export interface SessionSummaryPayload {
  session_id: string;
  image: string;
  created_at: number;
  n_exchanges: number;
}

export interface OverrideRequest {
  chosen: "answer1" | "answer2" | "external";
  text?: string;
  note: string;
}
