"""The seven-question climate-innovation rubric, prompt construction and response parsing."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import ConfigurationError, ParseError, ScoreRangeError

QUESTION_KEYS = ("Q1", "Q2", "Q3", "Q4", "Q5", "Q6", "Q7")
FEATURE_KEYS = QUESTION_KEYS[1:]

BINARY = "binary"
SCALAR10 = "scalar10"
MODES = (BINARY, SCALAR10)

NO_SHOT = "no_shot"
CONTEXT = "context"
FEW_SHOT = "few_shot"
SCENARIOS = (NO_SHOT, CONTEXT, FEW_SHOT)

ANTI_HALLUCINATION = "Do not hallucinate. Only provide truthful answers."

# Section headings; the mock provider reads prompts by these markers.
GUIDANCE_HEADING = "## Guidance for each question"
EXEMPLAR_HEADING = "## Examples of successful climate innovations"
TARGET_HEADING = "## Work to evaluate"
QUESTIONS_HEADING = "## Questions"
FORMAT_HEADING = "## Response format"


@dataclass(frozen=True)
class Question:
    key: str
    name: str
    text: str
    context: str = ""


_QUESTIONS = (
    Question(
        "Q1", "MITIGATION",
        "Could this research feasibly lead to a reduction of greenhouse gas emissions "
        "or removal of carbon dioxide from the atmosphere?",
        "Answer yes when a plausible route exists from the findings to fewer emissions or to "
        "carbon removal, even if that route is indirect or long-term.",
    ),
    Question(
        "Q2", "TECHNOLOGY",
        "Does this research describe a technology with practical application?",
        "A technology here is a device, material, process or method that someone could build or "
        "operate. Purely observational or theoretical studies do not qualify.",
    ),
    Question(
        "Q3", "READINESS",
        "Does this research demonstrate that proof-of-concept has been achieved prior to "
        "commercialisation or deployment?",
        "Look for experimental validation, a working prototype or field trial results rather than "
        "proposals or simulations alone.",
    ),
    Question(
        "Q4", "MARKET",
        "Does a clear commercial market or industry need exist for this research?",
        "Consider whether identifiable customers or sectors would pay for the outcome today.",
    ),
    Question(
        "Q5", "TECH ENABLING",
        "Rather than a stand-alone technology, does this research represent the fundamental "
        "science that might enable future technology development?",
        "Answer yes for foundational advances whose value lies in what they make possible later.",
    ),
    Question(
        "Q6", "ECO FOCUS",
        "Was this research conducted with an explicit climate change or sustainability "
        "application in mind?",
        "The abstract should state a climate or sustainability motivation, not merely allow one.",
    ),
    Question(
        "Q7", "NEGLECTEDNESS",
        "Is this research more likely than not to be neglected by existing innovation support "
        "mechanisms in the UK?",
        "Judge whether grants, accelerators and investors would plausibly overlook this work.",
    ),
)


@dataclass(frozen=True)
class Rubric:
    questions: tuple[Question, ...] = _QUESTIONS

    def __post_init__(self):
        keys = tuple(q.key for q in self.questions)
        if keys != QUESTION_KEYS:
            raise ConfigurationError(f"rubric must have questions {QUESTION_KEYS} in order, got {keys}")

    @property
    def contexts(self) -> dict[str, str]:
        return {q.key: q.context for q in self.questions}

    def with_context(self, paragraphs: Mapping[str, str]) -> "Rubric":
        unknown = set(paragraphs) - set(QUESTION_KEYS)
        if unknown:
            raise ConfigurationError(f"context for unknown questions: {sorted(unknown)}")
        return Rubric(tuple(replace(q, context=paragraphs.get(q.key, q.context)) for q in self.questions))


DEFAULT_RUBRIC = Rubric()


def load_context(path: str | Path) -> dict[str, str]:
    """Per-question context paragraphs from a JSON object ``{"Q1": "...", ...}``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ConfigurationError("context file must hold a JSON object")
    return {str(k).upper(): str(v) for k, v in data.items()}


@dataclass(frozen=True)
class Exemplar:
    title: str
    abstract: str


def load_exemplars(path: str | Path) -> list[Exemplar]:
    """Exemplar abstracts, one JSON object per line with ``title`` and ``abstract``."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            out.append(Exemplar(str(data.get("title") or ""), str(data["abstract"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigurationError(f"{path}:{lineno}: bad exemplar: {exc}") from exc
    return out


@dataclass(frozen=True)
class PromptScenario:
    kind: str
    context_text: Mapping[str, str] | None = None
    exemplars: tuple[Exemplar, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exemplars", tuple(self.exemplars))

    def validate(self) -> None:
        if self.kind not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.kind!r}")
        if self.kind == NO_SHOT and (self.context_text or self.exemplars):
            raise ConfigurationError("no_shot scenario takes neither context nor exemplars")
        if self.kind in (CONTEXT, FEW_SHOT) and not self.context_text:
            raise ConfigurationError(f"{self.kind} scenario requires context text")
        if self.kind == FEW_SHOT and not self.exemplars:
            raise ConfigurationError("few_shot scenario requires at least one exemplar")

    @classmethod
    def make(cls, kind: str, rubric: Rubric = DEFAULT_RUBRIC, exemplars: Sequence[Exemplar] = ()) -> "PromptScenario":
        if kind == NO_SHOT:
            return cls(NO_SHOT)
        return cls(kind, rubric.contexts, tuple(exemplars) if kind == FEW_SHOT else ())

    @property
    def source(self) -> str:
        return "llm_" + self.kind


@dataclass(frozen=True)
class ScoreVector:
    mode: str
    values: Mapping[str, int]

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown scoring mode {self.mode!r}")
        values = dict(self.values)
        for key in QUESTION_KEYS:
            if key not in values:
                raise ParseError(f"missing score for {key}", key=key)
            check_score(key, values[key], self.mode)
        if set(values) - set(QUESTION_KEYS):
            raise ParseError(f"unexpected keys {sorted(set(values) - set(QUESTION_KEYS))}")
        object.__setattr__(self, "values", {k: int(values[k]) for k in QUESTION_KEYS})

    def __getitem__(self, key: str) -> int:
        return self.values[key]

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(self.values[k] for k in QUESTION_KEYS)


def check_score(key: str, value: Any, mode: str) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{key}: expected an integer, got {value!r}", key=key)
    if isinstance(value, float) and not value.is_integer():
        raise ScoreRangeError(f"{key}: fractional score {value!r} rejected", key=key)
    lo, hi = (0, 1) if mode == BINARY else (1, 10)
    if not lo <= value <= hi:
        raise ScoreRangeError(f"{key}: score {value!r} outside [{lo}, {hi}]", key=key)


def format_instruction(mode: str) -> str:
    example = ", ".join(f'"{k}": {0 if mode == BINARY else 5}' for k in QUESTION_KEYS)
    if mode == BINARY:
        scale = "Answer each question with 1 for Yes or 0 for No."
    elif mode == SCALAR10:
        scale = ("Score each question with an integer from 1 to 10, where 1 means definitely not "
                 "and 10 means definitely yes. Do not use fractions.")
    else:
        raise ConfigurationError(f"unknown scoring mode {mode!r}")
    return (
        f"{scale}\nReply with a single JSON object with exactly the keys "
        + ", ".join(QUESTION_KEYS)
        + f" and integer values, for example {{{example}}}."
    )


REEMPHASIS = ("IMPORTANT: your previous reply could not be read. Reply with only the JSON object "
              "described above, with all seven keys and integer values in range.")


@dataclass(frozen=True)
class Prompt:
    text: str
    format_instruction: str

    def reemphasized(self) -> str:
        return f"{self.text}\n\n{REEMPHASIS}"


def build_prompt(work, scenario: PromptScenario, mode: str, rubric: Rubric = DEFAULT_RUBRIC) -> Prompt:
    """Assemble the prompt for one work.

    ``work`` needs ``work_id``, ``title`` and ``abstract`` attributes.
    Context paragraphs come from the scenario, so a context run shows the
    model the same guidance human raters saw.
    """
    scenario.validate()
    fmt = format_instruction(mode)
    parts = [
        "You are assessing scientific research for its potential as a climate innovation.",
        ANTI_HALLUCINATION,
    ]
    if scenario.kind in (CONTEXT, FEW_SHOT):
        lines = [GUIDANCE_HEADING]
        for q in rubric.questions:
            lines.append(f"{q.key} ({q.name}): {scenario.context_text.get(q.key, '')}")
        parts.append("\n".join(lines))
    if scenario.kind == FEW_SHOT:
        lines = [
            EXEMPLAR_HEADING,
            "Each example below describes research that led to a spin-out climate-tech company "
            "with high potential to mitigate climate change. Use them as a reference.",
        ]
        for i, ex in enumerate(scenario.exemplars, 1):
            lines.append(f"### Example {i}\nTitle: {ex.title}\nText: {ex.abstract}")
        parts.append("\n".join(lines))
    parts.append(f"{TARGET_HEADING}\nWork ID: {work.work_id}\nTitle: {work.title}\nAbstract: {work.abstract}")
    parts.append(QUESTIONS_HEADING + "\n" + "\n".join(f"{q.key} ({q.name}): {q.text}" for q in rubric.questions))
    parts.append(f"{FORMAT_HEADING}\n{fmt}")
    return Prompt("\n\n".join(parts), fmt)


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def _candidate_objects(raw: str):
    for match in _FENCE_RE.finditer(raw):
        try:
            yield json.loads(match.group(1))
        except ValueError:
            pass
    decoder = json.JSONDecoder()
    for i, ch in enumerate(raw):
        if ch == "{":
            try:
                obj, _ = decoder.raw_decode(raw, i)
            except ValueError:
                continue
            yield obj


def parse_response(raw: str, mode: str) -> ScoreVector:
    """Pull the first JSON object with question keys out of a model reply and validate it."""
    if mode not in MODES:
        raise ConfigurationError(f"unknown scoring mode {mode!r}")
    for obj in _candidate_objects(raw or ""):
        if not isinstance(obj, dict):
            continue
        normalized = {str(k).strip().upper(): v for k, v in obj.items()}
        if not any(k in normalized for k in QUESTION_KEYS):
            continue
        for key in QUESTION_KEYS:
            if key not in normalized:
                raise ParseError(f"response lacks {key}", key=key)
        return ScoreVector(mode, {k: normalized[k] for k in QUESTION_KEYS})
    raise ParseError("no JSON object with question keys found in response")
