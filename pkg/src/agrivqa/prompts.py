"""Prompt texts, few-shot exemplar sets, and the caption debiasing gate.

All rendering is pure: the same inputs always produce byte-identical prompt
text. Templates can be overridden per deployment by dropping ``<name>.txt``
files into a templates directory; ``{placeholder}`` tokens are substituted
literally, so JSON braces inside templates are safe.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Iterable

from .errors import ConfigError
from .gateway import ImagePart, TextPart, Turn
from .records import TaskKind

# ---------------------------------------------------------------------------
# Stage 1: caption generation / scoring / refinement
# ---------------------------------------------------------------------------

CAPTION_SYSTEM = """\
You are an expert agricultural assistant specializing in describing plant \
conditions from images.

## Core Task
Describe the visual features of the plant and any disease symptoms in the \
image, without identifying the plant or disease names.

## Key Requirements
1. Focus on describing the plant's morphology, color, and overall condition.
2. If disease symptoms are present, describe their appearance: color, shape, \
distribution, size, quantity, and extent.
3. If no disease is visible, state that the plant appears healthy.
4. Assess the severity and stage of any symptoms based on visual cues.
5. Keep the description concise (90-100 words).
6. If uncertain about features, indicate "unable to describe clearly" or \
"need more images".

## Output Format
{"image_caption": "Description of the plant's visual features and any \
disease symptoms, including morphology, color, distribution, size, and \
condition, without naming the plant or disease."}"""

CAPTION_USER = "Describe the visual features of the plant in this image."

# Rubric criterion -> description, used to build the scorer prompt.
CAPTION_DIMENSIONS: tuple[tuple[str, str], ...] = (
    ("Accuracy", "Correct identification of plant features and disease symptoms"),
    ("Completeness", "Includes plant type, symptoms, severity, and stage"),
    ("Detail", "Specific measurements, locations, and patterns"),
    ("Relevance", "Information useful for downstream diagnosis"),
    ("Clarity", "Professional terminology, 80-120 words"),
)

DEFAULT_DIMENSION_NAMES: tuple[str, ...] = tuple(name for name, _ in CAPTION_DIMENSIONS)

CAPTION_SCORE_SYSTEM = """\
You are an expert reviewer of plant condition descriptions. Evaluate the \
description below on five criteria, each scored 1-10:
1. Accuracy: Correct identification of plant features and disease symptoms
2. Completeness: Includes plant type, symptoms, severity, and stage
3. Detail: Specific measurements, locations, and patterns
4. Relevance: Information useful for downstream diagnosis
5. Clarity: Professional terminology, 80-120 words

Quality levels: 9-10 Excellent, 7-8 Good, 5-6 Fair, 2-4 Poor, 1 Unacceptable.
The description must not name the plant species or the disease; treat any \
such naming as an accuracy defect and call it out in the suggestions.

## Output Format
{"scores": {"Accuracy": 0, "Completeness": 0, "Detail": 0, "Relevance": 0, \
"Clarity": 0}, "rating": 0, "reasoning": "Why the scores were assigned", \
"suggestions": "Concrete improvements"}"""

CAPTION_SCORE_USER = "Description to evaluate:\n{caption}"

CAPTION_REFINE_SYSTEM = """\
You are an expert agricultural assistant improving a plant condition \
description.

## Core Task
Rewrite the description to address every issue raised in the review, \
without identifying the plant or disease names.

## Key Requirements
1. Address each identified issue directly.
2. Add specific symptom details: measurements, locations, distribution \
patterns, affected area.
3. Maintain professional terminology.
4. Keep the description within 80-120 words.
5. Never name the plant species or the disease; describe only what is \
visible.

## Example Captions
- The plant has long, slender leaves with numerous orange-brown pustules \
scattered on the surface, measuring 1-2 mm, affecting roughly 30% of the \
leaf area with premature browning.
- Broad, ovate leaves show dark concentric necrotic lesions 5-10 mm across \
with chlorotic margins, concentrated on lower foliage; overall vigor is \
moderately reduced.

## Output Format
{"image_caption": "The improved description."}"""

CAPTION_REFINE_USER = """\
Current description:
{caption}

Review:
{critique}

Rewrite the description now."""

# ---------------------------------------------------------------------------
# Stage 2: dual-answer VQA
# ---------------------------------------------------------------------------

VQA_SYSTEM_RECOGNITION = """\
You are an agricultural expert answering diagnostic questions about crop \
images. You receive the image, a background caption describing it, and a \
question. Return two complementary answers from different diagnostic \
perspectives.

## Rules
1. Base answers solely on image, caption, and question
2. Prioritize scientific accuracy
3. Never return empty answers
4. BOTH answers must include BOTH plant type and disease type
5. Answer1: Focus on PEST/DISEASE identification (symptoms, severity, features)
6. Answer2: Focus on CROP identification (type, variety, morphology)
7. Both answers should be scientifically accurate and detailed

## Output Format
{"answer1": "Disease-focused answer", "answer2": "Crop-focused answer"}"""

VQA_SYSTEM_KNOWLEDGE = """\
You are an agricultural expert specializing in plant disease diagnosis and \
management.

Scope: rice blast, tomato leaf mold, wheat leaf rust, apple gray/sooty/blotch \
diseases, maize northern leaf blight, cucurbit powdery mildew, grape leaf \
blight, tomato yellow leaf curl virus (TYLCV), pepper bacterial spot, and \
similar field/greenhouse pathosystems.

## Skills
1. Extract disease context from background Q&A and question.
2. Diagnose and describe disease mechanisms, signs/symptoms, and disease \
cycles; include differential diagnosis.
3. Translate product names to active ingredients; handle dilutions and rates \
precisely (metric units).
4. Give practical, stage-specific recommendations (seed/seedling, vegetative, \
reproductive), including timings, intervals, and number of applications.
5. Integrate IPM: resistant varieties, sanitation, crop rotation, canopy \
management, balanced fertilization (N-P-K-Si), irrigation and drainage, \
environmental control (temp/RH/ventilation).
6. Address resistance management: rotate modes of action (e.g., FRAC for \
fungicides, IRAC for insecticides).
7. Ensure scientific accuracy, safety, and applicability.

## Rules
1. Base answers on provided background; supplement only with widely accepted \
general agronomic knowledge if needed.
2. If specific data (dose, interval, temperature threshold) are provided in \
the background, use them verbatim.
3. Include active ingredient and formulation when available (e.g., 20% \
wettable powder at 1000x dilution), spray volume, timing, interval, and \
number of sprays.
4. For cultural practices, include actionable details: balanced N-P-K, \
silicon/potash, drainage, plant spacing, pruning for airflow, temperature/RH \
targets.
5. Rotate fungicides with different FRAC codes; avoid more than 2 consecutive \
applications of the same MoA.
6. Provide TWO answers:
   Answer1: Treatment, prevention, and control (step-by-step IPM with \
specific methods, timings, dosages, intervals).
   Answer2: Disease explanation (symptoms, causes/etiology, disease \
cycle/epidemiology, conducive conditions).
7. Advise PPE, follow local labels, observe pre-harvest intervals (PHI) and \
re-entry intervals (REI).

## Output Format
{"answer1": "Treatment-focused answer", "answer2": "Mechanism-focused answer"}"""

VQA_USER = "Background(image_caption): {caption}\nQuestion: {question}"

VQA_SYSTEM_SINGLE = """\
You are an agricultural expert answering diagnostic questions about crop \
images. You receive the image, a background caption describing it, and a \
question.

## Rules
1. Base the answer solely on image, caption, and question
2. Prioritize scientific accuracy
3. Never return an empty answer
4. {viewpoint_instruction}
5. The answer should be scientifically accurate and detailed

## Output Format
{"answer": "Your answer"}"""

# Instruction text per viewpoint id, used in two-call mode.
VIEWPOINT_INSTRUCTIONS: dict[str, str] = {
    "disease_focus": "Focus on PEST/DISEASE identification (symptoms, severity, features); still name both plant type and disease type",
    "crop_focus": "Focus on CROP identification (type, variety, morphology); still name both plant type and disease type",
    "treatment_focus": "Focus on treatment, prevention, and control: step-by-step IPM with specific methods, timings, dosages, intervals",
    "mechanism_focus": "Focus on disease explanation: symptoms, causes/etiology, disease cycle/epidemiology, conducive conditions",
}

# ---------------------------------------------------------------------------
# Stage 3: judge
# ---------------------------------------------------------------------------

DIAGNOSIS_CRITERIA: tuple[str, ...] = (
    "plant_accuracy",
    "disease_accuracy",
    "symptom_accuracy",
    "format_adherence",
    "completeness",
)

KNOWLEDGE_CRITERIA: tuple[str, ...] = (
    "accuracy",
    "completeness",
    "specificity",
    "practicality",
    "scientific_validity",
)

JUDGE_SYSTEM_RECOGNITION = """\
You are an agricultural expert evaluating two answers to a question about \
plant disease diagnosis.

## Evaluation Criteria:
1. Accuracy of Plant Identification: Correct identification of crop species
2. Accuracy of Disease/Pest Identification: Correct identification of \
disease or pest
3. Symptom Description Accuracy: Precise description of disease symptoms
4. Adherence to Required Format: Proper structure with plant and disease \
identification
5. Completeness and Professionalism: Comprehensive and scientifically sound \
response

Response length is not an evaluation criterion. Score each criterion from \
0 to 1 (1.0 precise, 0.5 partial, 0.0 wrong or missing).

## Task:
Compare Answer 1 and Answer 2 based on the above criteria and select the \
better one.

## Output Format:
{
  "choice": 1 or 2,
  "reason": "Brief explanation for your choice",
  "scores": {
    "answer1": {
      "plant_accuracy": 0-1,
      "disease_accuracy": 0-1,
      "symptom_accuracy": 0-1,
      "format_adherence": 0-1,
      "completeness": 0-1,
      "total": 0-5
    },
    "answer2": {
      "plant_accuracy": 0-1,
      "disease_accuracy": 0-1,
      "symptom_accuracy": 0-1,
      "format_adherence": 0-1,
      "completeness": 0-1,
      "total": 0-5
    }
  }
}

## Example
Question: What disease is affecting this plant?
Answer 1: Apple leaf with Alternaria blotch. Symptoms include circular brown \
spots with yellow halos.
Answer 2: This leaf might be diseased. It has some spots.
Output: {"choice": 1, "reason": "Answer 1 correctly identifies both plant \
(apple) and disease (Alternaria blotch) with specific symptoms. Answer 2 is \
vague.", "scores": {"answer1": {"plant_accuracy": 1.0, "disease_accuracy": \
1.0, "symptom_accuracy": 0.9, "format_adherence": 1.0, "completeness": 0.9, \
"total": 4.8}, "answer2": {"plant_accuracy": 0.3, "disease_accuracy": 0.2, \
"symptom_accuracy": 0.3, "format_adherence": 0.3, "completeness": 0.5, \
"total": 1.6}}}"""

JUDGE_SYSTEM_KNOWLEDGE = """\
You are an agricultural expert evaluating two answers to an open-ended \
question about plant disease management.

## Evaluation Criteria:
1. Accuracy: Scientifically correct information
2. Completeness: Covers all relevant aspects
3. Specificity: Precise details (rates, timings, methods)
4. Practicality: Actionable for farmers
5. Scientific Validity: Evidence-based, proper terminology

Response length is not an evaluation criterion. Score each criterion from \
0 to 1 (1.0 rigorous, 0.5 adequate, 0.0 questionable or missing).

## Task:
Compare Answer 1 and Answer 2 based on the above criteria and select the \
better one.

## Output Format:
{
  "choice": 1 or 2,
  "reason": "Brief explanation for your choice",
  "scores": {
    "answer1": {
      "accuracy": 0-1,
      "completeness": 0-1,
      "specificity": 0-1,
      "practicality": 0-1,
      "scientific_validity": 0-1,
      "total": 0-5
    },
    "answer2": {
      "accuracy": 0-1,
      "completeness": 0-1,
      "specificity": 0-1,
      "practicality": 0-1,
      "scientific_validity": 0-1,
      "total": 0-5
    }
  }
}"""

JUDGE_USER = """\
Question: {question}
Background(image_caption): {caption}
{reference_block}Answer 1: {answer1}
Answer 2: {answer2}"""

QA_SCORE_SYSTEM = """\
You are grading an answer against a reference. Rate the answer's usefulness, \
relevance, and factual accuracy on a single 1-10 integer scale (10 best). \
Reply with the integer only."""

QA_SCORE_USER = """\
Question: {question}
Reference answer: {reference}
Answer to grade: {response}"""

_TEMPLATE_DEFAULTS: dict[str, str] = {
    "caption_system": CAPTION_SYSTEM,
    "caption_user": CAPTION_USER,
    "caption_score_system": CAPTION_SCORE_SYSTEM,
    "caption_score_user": CAPTION_SCORE_USER,
    "caption_refine_system": CAPTION_REFINE_SYSTEM,
    "caption_refine_user": CAPTION_REFINE_USER,
    "vqa_system_recognition": VQA_SYSTEM_RECOGNITION,
    "vqa_system_knowledge": VQA_SYSTEM_KNOWLEDGE,
    "vqa_system_single": VQA_SYSTEM_SINGLE,
    "vqa_user": VQA_USER,
    "judge_system_recognition": JUDGE_SYSTEM_RECOGNITION,
    "judge_system_knowledge": JUDGE_SYSTEM_KNOWLEDGE,
    "judge_user": JUDGE_USER,
    "qa_score_system": QA_SCORE_SYSTEM,
    "qa_score_user": QA_SCORE_USER,
}


def substitute(template: str, **values: str) -> str:
    """Replace {name} tokens for the provided names only.

    Unlike str.format, leaves all other braces (JSON examples) untouched.
    """
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


# ---------------------------------------------------------------------------
# Few-shot exemplars
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exemplar:
    question: str = ""
    answer: str = ""
    caption: str | None = None
    image: str | None = None


@dataclass(frozen=True)
class ExemplarSet:
    task: TaskKind
    exemplars: tuple[Exemplar, ...]
    source: str = "builtin"  # "builtin" | "file"

    def select(self, n: int, rng: Random | None = None) -> "ExemplarSet":
        """First n exemplars, or a seeded uniform draw when rng is given."""
        if n < 0:
            raise ConfigError(f"shot count must be >= 0, got {n}")
        n = min(n, len(self.exemplars))
        if rng is None:
            chosen = self.exemplars[:n]
        else:
            chosen = tuple(rng.sample(list(self.exemplars), n))
        return ExemplarSet(self.task, chosen, self.source)

    def __len__(self) -> int:
        return len(self.exemplars)


def load_exemplar_file(path: str | Path, task: TaskKind) -> ExemplarSet:
    """Load exemplars from a JSON array or JSONL file of objects."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("["):
        rows = json.loads(text)
    else:
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    exemplars = tuple(
        Exemplar(
            question=row.get("question", ""),
            answer=row.get("answer", ""),
            caption=row.get("caption") or row.get("image_caption"),
            image=row.get("image"),
        )
        for row in rows
    )
    return ExemplarSet(task, exemplars, source="file")


# Caption-register demonstrations: morphology only, no species or disease
# names, with measurements and affected-area estimates.
CAPTION_EXEMPLARS = ExemplarSet(
    TaskKind.RECOGNITION,
    (
        Exemplar(
            caption=(
                "The plant has long, slender leaves with numerous orange-brown "
                "pustules scattered on the surface. The leaves show premature "
                "browning and some collapse. The symptoms suggest a fungal "
                "infection that reduces plant vigor, with pustules measuring "
                "1-2 mm in diameter. The condition appears moderate, affecting "
                "approximately 30% of the leaf area."
            )
        ),
        Exemplar(
            caption=(
                "Broad, ovate leaves with serrated margins display dark brown "
                "necrotic lesions arranged in concentric rings, 5-10 mm across, "
                "each surrounded by a yellow halo. Lesions are concentrated on "
                "the older, lower foliage and cover roughly 15-20% of the leaf "
                "surface. Affected tissue is dry and papery at the center. The "
                "symptoms appear at a mid stage of development, and overall "
                "plant vigor is moderately reduced."
            )
        ),
        Exemplar(
            caption=(
                "Trifoliate leaves carry a white, powdery coating spread in "
                "irregular patches across the upper surfaces, densest along "
                "the midribs. Patches merge into larger mats covering about "
                "40% of the canopy; underlying tissue is pale and slightly "
                "distorted. No necrosis is visible yet. The condition appears "
                "at an early-to-moderate stage, with growth mildly suppressed."
            )
        ),
    ),
)

RECOGNITION_EXEMPLARS = ExemplarSet(
    TaskKind.RECOGNITION,
    (
        Exemplar(
            caption=(
                "Ovate leaf with serrated margins showing circular brown "
                "lesions 2-5 mm across with yellowish halos, scattered over "
                "about 20% of the surface."
            ),
            question="Is this crop diseased?",
            answer=(
                "Answer 1: Yes. The circular brown lesions (2-5 mm) with "
                "yellowish halos on an apple leaf indicate Alternaria blotch, "
                "a fungal disease; severity is moderate. Answer 2: The host is "
                "apple (Malus domestica), identified by the ovate leaf shape "
                "and serrated margins; the lesion pattern is consistent with a "
                "fungal leaf blotch."
            ),
        ),
        Exemplar(
            caption=(
                "Long slender leaves with parallel venation carrying "
                "orange-brown pustules 1-2 mm wide over roughly 30% of the "
                "surface, with premature browning."
            ),
            question="What disease is affecting this plant?",
            answer=(
                "Answer 1: The orange-brown pustules scattered across the "
                "blade identify leaf rust on wheat; the infestation is "
                "moderate and actively sporulating. Answer 2: The plant is "
                "wheat, recognizable by its slender linear blades with "
                "parallel venation; the rust pustules overlay otherwise "
                "healthy tissue."
            ),
        ),
        Exemplar(
            caption=(
                "Compound pinnate leaf with dark brown concentric ring "
                "lesions, dark centres and chlorotic halos, concentrated on "
                "lower leaves."
            ),
            question="Is this crop diseased?",
            answer=(
                "Answer 1: Yes. The target-spot lesions with concentric rings "
                "and chlorotic halos on a tomato leaf indicate early blight "
                "(Alternaria solani). Answer 2: The host is tomato, shown by "
                "the compound pinnate leaf; lesion distribution on older "
                "foliage fits an early-season fungal infection."
            ),
        ),
    ),
)

KNOWLEDGE_EXEMPLARS = ExemplarSet(
    TaskKind.KNOWLEDGE,
    (
        Exemplar(
            caption="Plant: Wheat; Disease: Leaf Rust. Orange-brown pustules on leaf blades.",
            question="What control techniques are applicable to Wheat Leaf Rust?",
            answer=(
                "Answer 1 (Treatment): Control mainly relies on planting "
                "resistant varieties, supplemented by chemical treatments. "
                "Plant resistant varieties such as Shaanong 7859, Ji 5418. "
                "Seed dressing: 0.03-0.04% triazolone. Foliar spray: 20% "
                "triazolone 1000x at disease onset, repeat every 10-20 days. "
                "Cultural: sow at appropriate time, eliminate volunteers, "
                "ensure drainage. Answer 2 (Explanation): Wheat Leaf Rust is "
                "caused by Puccinia triticina. Pathogen overwinters on "
                "stubble; spreads via wind-borne urediniospores in spring "
                "(optimal 15-22 C). Multiple infection cycles possible during "
                "the growing season, leading to premature leaf senescence and "
                "yield loss."
            ),
        ),
        Exemplar(
            caption="Plant: Tomato; Disease: Leaf Mold. Velvety olive patches under the leaves.",
            question="How should tomato leaf mold be managed in a greenhouse?",
            answer=(
                "Answer 1 (Treatment): Lower humidity below 85% RH with "
                "ventilation and wider spacing; remove infected lower leaves; "
                "spray chlorothalonil 75% WP at 600x every 7-10 days, "
                "rotating FRAC codes after two applications. Answer 2 "
                "(Explanation): Leaf mold is caused by Passalora fulva, which "
                "sporulates on the abaxial surface under high humidity; "
                "conidia spread by air movement and tools, and cool, damp "
                "greenhouse conditions drive repeated infection cycles."
            ),
        ),
        Exemplar(
            caption="Plant: Cucumber; Disease: Powdery Mildew. White powdery patches on upper leaf surfaces.",
            question="What prevents powdery mildew spread in cucurbits?",
            answer=(
                "Answer 1 (Treatment): Plant tolerant varieties; maintain "
                "airflow through pruning and spacing; apply sulfur 80% WG at "
                "300x or myclobutanil at label rate at first sign, with 7-14 "
                "day intervals and MoA rotation. Answer 2 (Explanation): "
                "Powdery mildew fungi (Podosphaera xanthii) colonize the leaf "
                "surface, thrive at moderate temperatures with high humidity "
                "but dry leaves, and disperse conidia on wind, so canopy "
                "management and early protectant coverage interrupt the cycle."
            ),
        ),
    ),
)

BUILTIN_VQA_EXEMPLARS: dict[TaskKind, ExemplarSet] = {
    TaskKind.RECOGNITION: RECOGNITION_EXEMPLARS,
    TaskKind.KNOWLEDGE: KNOWLEDGE_EXEMPLARS,
    # MCQ runs the recognition pipeline unchanged.
    TaskKind.MCQ: RECOGNITION_EXEMPLARS,
}


# ---------------------------------------------------------------------------
# Banned-term lexicon (caption debiasing gate)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TermHit:
    term: str
    category: str  # crop_names | disease_names | indirect_cues
    span: tuple[int, int]


@dataclass(frozen=True)
class BannedTermLexicon:
    crop_names: frozenset[str]
    disease_names: frozenset[str]
    indirect_cues: frozenset[str]

    def __post_init__(self) -> None:
        for category in ("crop_names", "disease_names", "indirect_cues"):
            for term in getattr(self, category):
                if not term or term != term.lower():
                    raise ConfigError(
                        f"lexicon entries must be non-empty lowercase; bad "
                        f"{category} entry {term!r}"
                    )

    @staticmethod
    def build(
        crop_names: Iterable[str] = (),
        disease_names: Iterable[str] = (),
        indirect_cues: Iterable[str] = (),
    ) -> "BannedTermLexicon":
        return BannedTermLexicon(
            frozenset(crop_names), frozenset(disease_names), frozenset(indirect_cues)
        )


DEFAULT_LEXICON = BannedTermLexicon.build(
    crop_names=(
        "wheat", "corn", "maize", "tomato", "apple", "rice", "grape",
        "cucumber", "pepper",
    ),
    disease_names=(
        "leaf rust", "early blight", "late blight", "alternaria blotch",
        "powdery mildew", "leaf mold", "tylcv", "tomato yellow leaf curl virus",
        "bacterial spot", "northern leaf blight",
    ),
    indirect_cues=("consistent with", "typical of"),
)


def load_lexicon(path: str | Path) -> BannedTermLexicon:
    """Load a lexicon from JSON: {"crop_names": [...], "disease_names": [...], "indirect_cues": [...]}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return BannedTermLexicon.build(
        crop_names=[t.lower() for t in data.get("crop_names", [])],
        disease_names=[t.lower() for t in data.get("disease_names", [])],
        indirect_cues=[t.lower() for t in data.get("indirect_cues", [])],
    )


def detect_banned_terms(caption: str, lexicon: BannedTermLexicon) -> list[TermHit]:
    """Every lexicon hit in the caption, with character spans.

    Crop and disease names match as whole words (case-insensitive); indirect
    cues match as plain substrings. An empty result means the caption passes
    the debiasing gate.
    """
    if not caption:
        raise ValueError("caption must be non-empty")
    hits: list[TermHit] = []
    for category in ("crop_names", "disease_names"):
        for term in getattr(lexicon, category):
            pattern = r"\b" + re.escape(term) + r"\b"
            for m in re.finditer(pattern, caption, flags=re.IGNORECASE):
                hits.append(TermHit(term, category, (m.start(), m.end())))
    lowered = caption.lower()
    for cue in lexicon.indirect_cues:
        start = 0
        while True:
            idx = lowered.find(cue, start)
            if idx < 0:
                break
            hits.append(TermHit(cue, "indirect_cues", (idx, idx + len(cue))))
            start = idx + 1
    hits.sort(key=lambda h: (h.span, h.category, h.term))
    return hits


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RenderedPrompt:
    """System text plus conversation turns, ready to wrap in a ChatRequest."""

    system: str
    turns: tuple[Turn, ...]

    def text(self) -> str:
        pieces = [self.system]
        for turn in self.turns:
            for part in turn.parts:
                if isinstance(part, TextPart):
                    pieces.append(f"{turn.role}: {part.text}")
                else:
                    pieces.append(f"{turn.role}: [image:{part.ref}]")
        return "\n".join(pieces)


class PromptLibrary:
    """Named templates with optional per-deployment file overrides."""

    def __init__(self, templates_dir: str | Path | None = None):
        self._templates = dict(_TEMPLATE_DEFAULTS)
        if templates_dir is not None:
            directory = Path(templates_dir)
            if not directory.is_dir():
                raise ConfigError(f"templates directory not found: {directory}")
            for path in sorted(directory.glob("*.txt")):
                name = path.stem
                if name not in self._templates:
                    raise ConfigError(f"unknown template override {name!r}")
                self._templates[name] = path.read_text(encoding="utf-8")

    def template(self, name: str) -> str:
        return self._templates[name]

    # -- stage 1 --------------------------------------------------------

    def render_caption_prompt(
        self, exemplars: ExemplarSet, image: str | None = None
    ) -> RenderedPrompt:
        """Caption-generation prompt with exemplar captions as demonstrations."""
        turns: list[Turn] = []
        for ex in exemplars.exemplars:
            if ex.caption is None:
                raise ConfigError("caption exemplars must carry caption text")
            if ex.image is not None:
                turns.append(Turn.user(self.template("caption_user"), ImagePart(ex.image)))
            else:
                turns.append(Turn.user(self.template("caption_user")))
            turns.append(Turn.assistant(json.dumps({"image_caption": ex.caption})))
        live_parts: list[TextPart | ImagePart] = [TextPart(self.template("caption_user"))]
        if image is not None:
            live_parts.append(ImagePart(image))
        turns.append(Turn("user", tuple(live_parts)))
        return RenderedPrompt(self.template("caption_system"), tuple(turns))

    def render_caption_score_prompt(self, caption: str) -> RenderedPrompt:
        user = substitute(self.template("caption_score_user"), caption=caption)
        return RenderedPrompt(self.template("caption_score_system"), (Turn.user(user),))

    def render_refinement_prompt(
        self, caption: str, critique: str, image: str | None = None
    ) -> RenderedPrompt:
        user = substitute(self.template("caption_refine_user"), caption=caption, critique=critique)
        parts: list[TextPart | ImagePart] = [TextPart(user)]
        if image is not None:
            parts.append(ImagePart(image))
        return RenderedPrompt(self.template("caption_refine_system"), (Turn("user", tuple(parts)),))

    # -- stage 2 --------------------------------------------------------

    def render_vqa_prompt(
        self,
        task: TaskKind,
        caption: str,
        question: str,
        exemplars: ExemplarSet,
        image: str | None = None,
        viewpoint: str | None = None,
    ) -> RenderedPrompt:
        """Dual-answer VQA prompt; single-viewpoint variant when viewpoint given."""
        if not question:
            raise ConfigError("question must be non-empty")
        if viewpoint is not None:
            instruction = VIEWPOINT_INSTRUCTIONS.get(viewpoint)
            if instruction is None:
                raise ConfigError(f"unknown viewpoint {viewpoint!r}")
            system = substitute(
                self.template("vqa_system_single"), viewpoint_instruction=instruction
            )
        elif task in (TaskKind.RECOGNITION, TaskKind.MCQ):
            system = self.template("vqa_system_recognition")
        elif task is TaskKind.KNOWLEDGE:
            system = self.template("vqa_system_knowledge")
        else:  # pragma: no cover - TaskKind is closed
            raise ConfigError(f"unknown task kind {task!r}")

        turns: list[Turn] = []
        for ex in exemplars.exemplars:
            if not ex.question or not ex.answer:
                raise ConfigError("VQA exemplars must carry question and answer text")
            user = substitute(
                self.template("vqa_user"), caption=ex.caption or "", question=ex.question
            )
            if ex.image is not None:
                turns.append(Turn.user(user, ImagePart(ex.image)))
            else:
                turns.append(Turn.user(user))
            turns.append(Turn.assistant(ex.answer))
        live = substitute(self.template("vqa_user"), caption=caption, question=question)
        parts: list[TextPart | ImagePart] = [TextPart(live)]
        if image is not None:
            parts.append(ImagePart(image))
        turns.append(Turn("user", tuple(parts)))
        return RenderedPrompt(system, tuple(turns))

    # -- stage 3 --------------------------------------------------------

    def render_judge_prompt(
        self,
        task: TaskKind,
        question: str,
        caption: str,
        reference: str | None,
        answer1: str,
        answer2: str,
        order: str = "as_given",
    ) -> RenderedPrompt:
        """Judge prompt; text-only, the image is never attached.

        With order="swapped" the candidate texts exchange positions; the
        caller is responsible for unswapping the returned choice.
        """
        if not answer1 or not answer2:
            raise ConfigError("both candidate answers must be non-empty")
        if order not in ("as_given", "swapped"):
            raise ConfigError(f"order must be as_given or swapped, got {order!r}")
        if task in (TaskKind.RECOGNITION, TaskKind.MCQ):
            system = self.template("judge_system_recognition")
        else:
            system = self.template("judge_system_knowledge")
        first, second = (answer1, answer2) if order == "as_given" else (answer2, answer1)
        reference_block = f"Reference Answer: {reference}\n" if reference else ""
        user = substitute(
            self.template("judge_user"),
            question=question,
            caption=caption,
            reference_block=reference_block,
            answer1=first,
            answer2=second,
        )
        return RenderedPrompt(system, (Turn.user(user),))

    def render_qa_score_prompt(self, question: str, reference: str, response: str) -> RenderedPrompt:
        user = substitute(
            self.template("qa_score_user"),
            question=question,
            reference=reference,
            response=response,
        )
        return RenderedPrompt(self.template("qa_score_system"), (Turn.user(user),))
