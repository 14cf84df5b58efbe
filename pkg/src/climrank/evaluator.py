"""Batch evaluation of a corpus sample by a model provider, and evaluation datasets."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import BatchError, ConfigurationError, LoadError, ParseError, ProviderError, SchemaError
from .rubric import DEFAULT_RUBRIC, MODES, QUESTION_KEYS, PromptScenario, Rubric, ScoreVector, build_prompt, parse_response

logger = logging.getLogger(__name__)

HUMAN = "human"
SOURCES = (HUMAN, "llm_no_shot", "llm_context", "llm_few_shot")

TEMPERATURE = 0.0
MAX_PARSE_ATTEMPTS = 3
MAX_TRANSPORT_RETRIES = 2
MAX_FAILURE_RATE = 0.10


@dataclass(frozen=True)
class EvaluationRecord:
    work_id: str
    rater_id: str
    source: str
    scores: ScoreVector
    raw_response: str | None = None
    retries: int = 0

    def __post_init__(self):
        if self.source not in SOURCES:
            raise SchemaError(f"unknown source {self.source!r}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.work_id, self.rater_id, self.source)


@dataclass(frozen=True)
class Failure:
    work_id: str
    rater_id: str
    reason: str


@dataclass
class EvaluationDataset:
    records: list[EvaluationRecord]
    works: list[str]
    raters_per_source: dict[str, int]
    failures: list[Failure] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.key in seen:
                raise SchemaError(f"duplicate record for {r.key}")
            seen.add(r.key)

    @property
    def sources(self) -> list[str]:
        return sorted({r.source for r in self.records} | set(self.raters_per_source))

    @property
    def mode(self) -> str:
        modes = {r.scores.mode for r in self.records}
        if len(modes) > 1:
            raise SchemaError(f"dataset mixes scoring modes {sorted(modes)}")
        return modes.pop() if modes else "binary"

    def raters(self, source: str) -> list[str]:
        return sorted({r.rater_id for r in self.records if r.source == source}, key=_rater_sort_key)

    def missing(self) -> list[tuple[str, str, str]]:
        """(rater, work, source) cells absent from an otherwise complete panel."""
        present = {r.key for r in self.records}
        out = []
        for source in sorted(self.raters_per_source):
            for rater in self.raters(source):
                for work in self.works:
                    if (work, rater, source) not in present:
                        out.append((rater, work, source))
        return out

    def is_complete(self) -> bool:
        expected = sum(len(self.works) * n for n in self.raters_per_source.values())
        return len(self.records) == expected and not self.missing()

    def for_source(self, source: str) -> "EvaluationDataset":
        return EvaluationDataset(
            [r for r in self.records if r.source == source],
            list(self.works),
            {source: self.raters_per_source.get(source, 0)},
            [f for f in self.failures],
        )


def _rater_sort_key(rater: str):
    return (0, int(rater), "") if rater.isdigit() else (1, 0, rater)


def _call_with_retries(provider, prompt: str, temperature: float, max_tokens: int, retries: int) -> str:
    last: Exception | None = None
    for _ in range(retries + 1):
        try:
            return provider.complete(prompt, temperature=temperature, max_tokens=max_tokens)
        except ProviderError as exc:
            last = exc
    raise ProviderError(f"provider failed after {retries + 1} attempts: {last}")


def _evaluate_one(work, run: int, scenario, mode, rubric, provider, parse_attempts, transport_retries, temperature, max_tokens):
    prompt = build_prompt(work, scenario, mode, rubric)
    rater = str(run)
    error = None
    for attempt in range(parse_attempts):
        text = prompt.text if attempt == 0 else prompt.reemphasized()
        try:
            raw = _call_with_retries(provider, text, temperature, max_tokens, transport_retries)
        except ProviderError as exc:
            return Failure(work.work_id, rater, str(exc))
        try:
            scores = parse_response(raw, mode)
        except ParseError as exc:
            error = exc
            logger.debug("unparseable reply for %s run %s: %s", work.work_id, rater, exc)
            continue
        return EvaluationRecord(work.work_id, rater, scenario.source, scores, raw, retries=attempt)
    return Failure(work.work_id, rater, f"unparseable after {parse_attempts} attempts: {error}")


def evaluate_batch(
    sample,
    scenario: PromptScenario,
    mode: str,
    runs: int,
    provider,
    *,
    rubric: Rubric = DEFAULT_RUBRIC,
    concurrency: int = 4,
    parse_attempts: int = MAX_PARSE_ATTEMPTS,
    transport_retries: int = MAX_TRANSPORT_RETRIES,
    max_failure_rate: float = MAX_FAILURE_RATE,
    max_tokens: int = 256,
    _temperature: float = TEMPERATURE,
) -> EvaluationDataset:
    """Score every work ``runs`` times at temperature 0.

    ``sample`` is a :class:`~climrank.corpus.CorpusSample` or a list of
    work records.  Run ``i`` becomes rater ``"i"``.  Failed (work, run)
    cells are listed in ``dataset.failures``; above ``max_failure_rate``
    a :class:`BatchError` carrying the partial dataset is raised.
    """
    if runs < 1:
        raise ConfigurationError(f"runs must be >= 1, got {runs}")
    if mode not in MODES:
        raise ConfigurationError(f"unknown scoring mode {mode!r}")
    scenario.validate()
    works = list(getattr(sample, "records", sample))
    tasks = [(w, run) for w in works for run in range(runs)]

    def job(task):
        w, run = task
        return _evaluate_one(w, run, scenario, mode, rubric, provider, parse_attempts,
                             transport_retries, _temperature, max_tokens)

    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(job, tasks))
    else:
        results = [job(t) for t in tasks]

    records = [r for r in results if isinstance(r, EvaluationRecord)]
    failures = [r for r in results if isinstance(r, Failure)]
    dataset = EvaluationDataset(records, [w.work_id for w in works], {scenario.source: runs}, failures)
    if tasks and len(failures) / len(tasks) > max_failure_rate:
        raise BatchError(
            f"{len(failures)} of {len(tasks)} evaluations failed", failures=failures, dataset=dataset
        )
    if failures:
        logger.warning("%d of %d evaluations failed", len(failures), len(tasks))
    return dataset


# -- files -------------------------------------------------------------------


def record_to_dict(record: EvaluationRecord) -> dict:
    d = {
        "work_id": record.work_id,
        "rater_id": record.rater_id,
        "source": record.source,
        "mode": record.scores.mode,
    }
    d.update(record.scores.values)
    return d


def save_dataset(dataset: EvaluationDataset, path: str | Path) -> int:
    """JSON lines: one header object, then one record per line.

    Timestamps are kept out of this file; see :func:`climrank.cli.write_sidecar`.
    """
    header = {
        "dataset": {
            "works": dataset.works,
            "raters_per_source": dict(sorted(dataset.raters_per_source.items())),
            "failures": [[f.work_id, f.rater_id, f.reason] for f in dataset.failures],
        }
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in dataset.records:
            fh.write(json.dumps(record_to_dict(r), sort_keys=True) + "\n")
    return len(dataset.records)


def load_dataset(path: str | Path) -> EvaluationDataset:
    records = []
    header = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                if lineno == 1 and "dataset" in data:
                    header = data["dataset"]
                    continue
                scores = ScoreVector(data["mode"], {k: data[k] for k in QUESTION_KEYS})
                records.append(EvaluationRecord(str(data["work_id"]), str(data["rater_id"]), data["source"], scores))
            except (ValueError, KeyError, TypeError) as exc:
                raise LoadError(f"bad evaluation record: {exc}", line=lineno) from exc
    if header is None:
        works = list(dict.fromkeys(r.work_id for r in records))
        raters: dict[str, set] = {}
        for r in records:
            raters.setdefault(r.source, set()).add(r.rater_id)
        return EvaluationDataset(records, works, {s: len(v) for s, v in raters.items()})
    failures = [Failure(*f) for f in header.get("failures", [])]
    return EvaluationDataset(records, list(header["works"]), dict(header["raters_per_source"]), failures)


def merge_datasets(datasets: Iterable[EvaluationDataset]) -> EvaluationDataset:
    datasets = list(datasets)
    works = list(dict.fromkeys(w for d in datasets for w in d.works))
    raters: dict[str, int] = {}
    for d in datasets:
        raters.update(d.raters_per_source)
    return EvaluationDataset(
        [r for d in datasets for r in d.records], works, raters, [f for d in datasets for f in d.failures]
    )
