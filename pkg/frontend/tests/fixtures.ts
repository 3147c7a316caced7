/** Shared payload fixtures mirroring real API responses. */

import type {
  CaptionTracePayload,
  ExchangePayload,
  JudgmentPayload,
  ScorecardPayload,
} from "../src/types.js";

export function scorecard(values: number[], total: number): ScorecardPayload {
  const names = [
    "plant_accuracy",
    "disease_accuracy",
    "symptom_accuracy",
    "format_adherence",
    "completeness",
  ];
  const card: ScorecardPayload = {};
  names.forEach((name, i) => (card[name] = values[i]));
  card.total = total;
  return card;
}

export function judgment(overrides: Partial<JudgmentPayload> = {}): JudgmentPayload {
  return {
    choice: "answer1",
    selected_text: "Early blight on tomato; rotate fungicides.",
    selected_score: 4.8,
    unselected_score: 4.2,
    rationale:
      "Answer 1 provides precise pathogen identification, detailed symptom " +
      "characterisation, and an actionable treatment recommendation; Answer 2 " +
      "accurately describes plant anatomy but offers limited guidance for " +
      "management decisions.",
    scorecards: {
      answer1: scorecard([1.0, 1.0, 1.0, 1.0, 0.8], 4.8),
      answer2: scorecard([1.0, 0.5, 0.9, 0.9, 0.9], 4.2),
    },
    order_used: "as_given",
    tiebreak_applied: false,
    ...overrides,
  };
}

export function exchange(overrides: Partial<ExchangePayload> = {}): ExchangePayload {
  return {
    question: "What disease is this?",
    candidates: {
      answer1: "Early blight on tomato; rotate fungicides.",
      answer2: "The plant is a tomato with compound pinnate leaves.",
      viewpoint1: "disease_focus",
      viewpoint2: "crop_focus",
      prompt_fingerprint: "abc123",
    },
    judgment: judgment(),
    override: null,
    override_history: [],
    created_at: 0,
    ...overrides,
  };
}

export function captionTrace(): CaptionTracePayload {
  return {
    iterations: [
      {
        caption: "Compound pinnate leaf with concentric ring lesions.",
        assessment: {
          dimension_scores: {
            Accuracy: 9,
            Completeness: 9,
            Detail: 9,
            Relevance: 9,
            Clarity: 9,
          },
          weights: { Accuracy: 1, Completeness: 1, Detail: 1, Relevance: 1, Clarity: 1 },
          aggregate: 9.0,
          reasoning: "precise",
          suggestions: "",
          threshold: 8.0,
          passed: true,
        },
        critique: null,
        banned_hits: [],
      },
    ],
    accepted_index: 0,
    converged: true,
    iterations_used: 0,
    residual_hits: false,
  };
}
