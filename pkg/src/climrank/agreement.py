"""Mean-score tables, Cohen's kappa and Pearson correlation across rater sources."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import AlignmentError, SchemaError
from .evaluator import EvaluationDataset
from .rubric import QUESTION_KEYS, SCALAR10


@dataclass
class MeanScoreTable:
    """Per-work mean score for each question, normalised to [0, 1]."""

    entries: dict[tuple[str, str], float]
    source: str
    n_raters: int
    mode: str = "binary"
    works: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.works:
            self.works = list(dict.fromkeys(w for w, _ in self.entries))
        for key, value in self.entries.items():
            if not 0.0 <= value <= 1.0:
                raise SchemaError(f"mean score {value} for {key} outside [0, 1]")

    @property
    def label(self) -> str:
        return self.source if self.mode == "binary" else f"{self.source}:{self.mode}"

    def __getitem__(self, key: tuple[str, str]) -> float:
        return self.entries[key]

    def column(self, question: str, works: Sequence[str] | None = None) -> np.ndarray:
        return np.array([self.entries[(w, question)] for w in (works or self.works)], dtype=float)

    def row(self, work_id: str, questions: Sequence[str] = QUESTION_KEYS) -> dict[str, float]:
        return {q: self.entries[(work_id, q)] for q in questions}


def mean_scores(dataset: EvaluationDataset, source: str | None = None) -> MeanScoreTable:
    """Average each (work, question) over the raters present.

    Scalar scores are divided by 10.  Works nobody rated are dropped with
    a warning.
    """
    sources = {r.source for r in dataset.records}
    if source is None:
        if len(sources) != 1:
            raise SchemaError(f"dataset holds sources {sorted(sources)}; pick one")
        source = sources.pop()
    records = [r for r in dataset.records if r.source == source]
    if not records:
        raise SchemaError(f"no records for source {source!r}")
    modes = {r.scores.mode for r in records}
    if len(modes) != 1:
        raise SchemaError(f"source {source!r} mixes scoring modes")
    mode = modes.pop()
    scale = 10.0 if mode == SCALAR10 else 1.0

    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for r in records:
        sums.setdefault(r.work_id, np.zeros(len(QUESTION_KEYS)))
        sums[r.work_id] += np.array(r.scores.as_tuple(), dtype=float)
        counts[r.work_id] = counts.get(r.work_id, 0) + 1

    entries = {}
    works = []
    for w in dataset.works:
        if w not in counts:
            warnings.warn(f"work {w} has no {source} ratings and is excluded", stacklevel=2)
            continue
        works.append(w)
        means = sums[w] / counts[w] / scale
        for q, m in zip(QUESTION_KEYS, means):
            entries[(w, q)] = float(m)
    n_raters = len({r.rater_id for r in records})
    return MeanScoreTable(entries, source, n_raters, mode, works)


def majority_binarize(table: MeanScoreTable) -> dict[tuple[str, str], int]:
    """1 where the mean is at least 0.5; an exact tie counts as yes."""
    return {key: int(value >= 0.5) for key, value in table.entries.items()}


class KappaResult(NamedTuple):
    kappa: float
    observed: float
    expected: float
    degenerate: bool


def kappa_detail(a: Sequence[int], b: Sequence[int]) -> KappaResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise AlignmentError(f"rating vectors differ in shape: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise AlignmentError("kappa needs at least two aligned ratings")
    if not (np.isin(a, (0, 1)).all() and np.isin(b, (0, 1)).all()):
        raise SchemaError("kappa inputs must be binary")
    po = float(np.mean(a == b))
    pa, pb = float(a.mean()), float(b.mean())
    pe = pa * pb + (1 - pa) * (1 - pb)
    a_const = pa in (0.0, 1.0)
    b_const = pb in (0.0, 1.0)
    if a_const and b_const:
        # Both raters constant: agreement is total or absent, chance explains all of it.
        return KappaResult(1.0 if pa == pb else -1.0, po, pe, True)
    return KappaResult((po - pe) / (1 - pe), po, pe, False)


def cohens_kappa(a: Sequence[int], b: Sequence[int]) -> float:
    """Cohen's kappa for two aligned binary rating vectors.

    When both raters are constant the chance term is degenerate; the
    result is then 1 if they agree and -1 if not (see :func:`kappa_detail`
    for the flag).
    """
    return kappa_detail(a, b).kappa


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Product-moment correlation, or ``None`` when either input has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise AlignmentError(f"vectors differ in shape: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise AlignmentError("correlation needs at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    if np.array_equal(x, y):
        return 1.0
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass
class CorrelationMatrix:
    labels: list[tuple[str, str]]
    values: np.ndarray  # NaN where undefined
    defined: np.ndarray

    def get(self, a: tuple[str, str], b: tuple[str, str]) -> float | None:
        i, j = self.labels.index(a), self.labels.index(b)
        return float(self.values[i, j]) if self.defined[i, j] else None

    @property
    def undefined_labels(self) -> list[tuple[str, str]]:
        return [lab for lab, ok in zip(self.labels, np.diag(self.defined)) if not ok]


def _common_works(tables: Sequence[MeanScoreTable]) -> list[str]:
    first = set(tables[0].works)
    for t in tables[1:]:
        if set(t.works) != first:
            raise AlignmentError(f"{t.label} covers a different work set than {tables[0].label}")
    return sorted(first)


def correlation_matrix(tables: Sequence[MeanScoreTable], questions: Sequence[str] = QUESTION_KEYS) -> CorrelationMatrix:
    """Pearson r between every (source, question) column over the shared works."""
    if not tables:
        raise SchemaError("no tables given")
    works = _common_works(tables)
    labels = [(t.label, q) for t in tables for q in questions]
    columns = [t.column(q, works) for t in tables for q in questions]
    n = len(labels)
    values = np.full((n, n), np.nan)
    defined = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i, n):
            r = pearson(columns[i], columns[j])
            if r is not None:
                values[i, j] = values[j, i] = r
                defined[i, j] = defined[j, i] = True
    return CorrelationMatrix(labels, values, defined)


@dataclass
class AgreementReport:
    kappa: dict[tuple[str, tuple[str, str]], float]
    kappa_sum: dict[tuple[str, str], float]
    degenerate: set[tuple[str, tuple[str, str]]]
    correlation: CorrelationMatrix

    @property
    def pairs(self) -> list[tuple[str, str]]:
        return list(self.kappa_sum)


def kappa_by_question(reference: MeanScoreTable, other: MeanScoreTable) -> dict[str, KappaResult]:
    works = _common_works([reference, other])
    ra, rb = majority_binarize(reference), majority_binarize(other)
    return {
        q: kappa_detail([ra[(w, q)] for w in works], [rb[(w, q)] for w in works])
        for q in QUESTION_KEYS
    }


def agreement_report(reference: MeanScoreTable, others: Sequence[MeanScoreTable]) -> AgreementReport:
    """Kappa of each table in ``others`` against ``reference`` per question, plus the full correlation matrix.

    Multi-rater panels are reduced to one label per work by majority vote
    before kappa is taken.
    """
    kappa: dict = {}
    sums: dict = {}
    degenerate = set()
    for other in others:
        pair = (reference.label, other.label)
        total = 0.0
        for q, res in kappa_by_question(reference, other).items():
            kappa[(q, pair)] = res.kappa
            total += res.kappa
            if res.degenerate:
                degenerate.add((q, pair))
        sums[pair] = total
    return AgreementReport(kappa, sums, degenerate, correlation_matrix([reference, *others]))
