/** Pure DOM builders for the session view. All data comes from the API. */

import type {
  CaptionTracePayload,
  ExchangePayload,
  OverridePayload,
  ScorecardPayload,
} from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function testId(node: HTMLElement, id: string): void {
  node.dataset.testid = id;
}

const VIEWPOINT_LABELS: Record<string, string> = {
  disease_focus: "Disease-focused",
  crop_focus: "Crop-focused",
  treatment_focus: "Treatment-focused",
  mechanism_focus: "Mechanism-focused",
};

export function viewpointLabel(id: string): string {
  return VIEWPOINT_LABELS[id] ?? id;
}

export function renderScorecard(card: ScorecardPayload): HTMLElement {
  const table = el("table", "scorecard");
  testId(table, "scorecard");
  const body = el("tbody");
  for (const [criterion, value] of Object.entries(card)) {
    if (criterion === "total") continue;
    const row = el("tr");
    row.append(el("td", "criterion", criterion.replace(/_/g, " ")));
    row.append(el("td", "value", value.toFixed(2)));
    body.append(row);
  }
  const totalRow = el("tr", "total-row");
  totalRow.append(el("td", "criterion", "total"));
  const total = el("td", "value total", (card.total ?? 0).toFixed(1));
  testId(total, "scorecard-total");
  totalRow.append(total);
  body.append(totalRow);
  table.append(body);
  return table;
}

export interface CaptionSummary {
  caption: string;
  score: number;
  dimensionScores: Record<string, number>;
  trace: CaptionTracePayload | null;
}

export function renderCaptionPanel(summary: CaptionSummary): HTMLElement {
  const panel = el("section", "caption-panel");
  testId(panel, "caption-panel");
  const heading = el("h2", undefined, "Refined caption");
  const score = el("span", "score-badge", ` ${summary.score.toFixed(1)}/10`);
  testId(score, "caption-score");
  heading.append(score);
  panel.append(heading);

  const text = el("p", "caption-text", summary.caption);
  testId(text, "caption-text");
  panel.append(text);

  const dims = el("ul", "dimension-scores");
  testId(dims, "caption-dimensions");
  for (const [name, value] of Object.entries(summary.dimensionScores)) {
    dims.append(el("li", undefined, `${name}: ${value.toFixed(1)}`));
  }
  panel.append(dims);

  // Refinement detail is audit material: collapsed by default.
  if (summary.trace && summary.trace.iterations.length > 0) {
    const details = el("details", "iteration-history");
    testId(details, "caption-history");
    const iterations = summary.trace.iterations.length;
    details.append(
      el(
        "summary",
        undefined,
        `Refinement history (${iterations} iteration${iterations === 1 ? "" : "s"})`,
      ),
    );
    summary.trace.iterations.forEach((iteration, i) => {
      const item = el("div", "iteration");
      const marker = i === summary.trace!.accepted_index ? " (accepted)" : "";
      item.append(
        el("h4", undefined, `Iteration ${i}${marker} - ${iteration.assessment.aggregate.toFixed(2)}/10`),
      );
      item.append(el("p", undefined, iteration.caption));
      if (iteration.critique) {
        item.append(el("p", "critique", `Critique: ${iteration.critique}`));
      }
      if (iteration.banned_hits.length > 0) {
        item.append(
          el(
            "p",
            "banned-hits",
            `Lexicon hits: ${iteration.banned_hits.map((h) => h.term).join(", ")}`,
          ),
        );
      }
      details.append(item);
    });
    panel.append(details);
  }
  return panel;
}

function renderOverrideState(
  override: OverridePayload,
  history: OverridePayload[],
): HTMLElement {
  const block = el("div", "override-state");
  testId(block, "override-state");
  const chosenLabel =
    override.chosen === "external" ? "external answer" : override.chosen;
  block.append(el("h4", undefined, `Practitioner override: ${chosenLabel}`));
  if (override.text) {
    block.append(el("p", "override-text", override.text));
  }
  if (override.note) {
    block.append(el("p", "override-note", `Note: ${override.note}`));
  }
  if (history.length > 0) {
    const audit = el("details", "override-history");
    audit.append(el("summary", undefined, `Prior overrides (${history.length})`));
    for (const prior of history) {
      audit.append(el("p", undefined, `${prior.chosen}${prior.note ? ` - ${prior.note}` : ""}`));
    }
    block.append(audit);
  }
  return block;
}

export interface ExchangeMeta {
  index: number;
  /** Known only for exchanges asked in this tab; null when unknown. */
  captionRecomputed: boolean | null;
}

export function renderExchange(exchange: ExchangePayload, meta: ExchangeMeta): HTMLElement {
  const section = el("section", "exchange");
  testId(section, "exchange");
  section.dataset.index = String(meta.index);

  section.append(el("h3", "question", `Q${meta.index + 1}: ${exchange.question}`));

  if (meta.captionRecomputed !== null) {
    const note = el(
      "p",
      "caption-reuse",
      meta.captionRecomputed
        ? "Caption refined for this session"
        : "Cached caption reused - no recomputation",
    );
    testId(note, "caption-reuse");
    note.dataset.captionRecomputed = String(meta.captionRecomputed);
    section.append(note);
  }

  const cards = el("div", "candidate-cards");
  const judgment = exchange.judgment;
  (["answer1", "answer2"] as const).forEach((name) => {
    const card = el("article", "candidate-card");
    testId(card, `candidate-${name}`);
    const selected = judgment.choice === name;
    card.dataset.selected = String(selected);
    if (selected) card.classList.add("selected");

    const viewpoint = name === "answer1" ? exchange.candidates.viewpoint1 : exchange.candidates.viewpoint2;
    const header = el("h4", undefined, `${viewpointLabel(viewpoint)}`);
    if (selected) {
      const badge = el("span", "selected-badge", " selected");
      testId(badge, "selected-badge");
      header.append(badge);
    }
    card.append(header);
    card.append(el("p", "answer-text", exchange.candidates[name]));
    card.append(renderScorecard(judgment.scorecards[name]));
    cards.append(card);
  });
  section.append(cards);

  const rationale = el("blockquote", "rationale", judgment.rationale);
  testId(rationale, "judge-rationale");
  section.append(rationale);

  const scores = el(
    "p",
    "judge-scores",
    `Judge: ${judgment.choice} at ${judgment.selected_score.toFixed(1)} vs ` +
      `${judgment.unselected_score.toFixed(1)}` +
      (judgment.tiebreak_applied ? " (tie-break applied)" : ""),
  );
  testId(scores, "judge-scores");
  section.append(scores);

  if (exchange.override) {
    section.append(renderOverrideState(exchange.override, exchange.override_history));
  }
  return section;
}

export function renderErrorPlaceholder(message: string): HTMLElement {
  const block = el("div", "error-placeholder", message);
  testId(block, "error-placeholder");
  return block;
}
