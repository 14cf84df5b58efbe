"""Keyword summaries of top-ranked works and plot-ready table exports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import singledispatch
from pathlib import Path
from typing import Mapping

import numpy as np

from .agreement import AgreementReport, CorrelationMatrix, MeanScoreTable
from .ranking import RankedList
from .rubric import QUESTION_KEYS


@dataclass
class KeywordReport:
    counts: list[tuple[str, int]]
    selection: str
    n_works: int
    truncated: bool = False

    def as_dict(self) -> dict[str, int]:
        return dict(self.counts)


def keyword_frequency(
    ranked: RankedList,
    works: Mapping,
    top_n: int = 10,
    include_controls: bool = False,
) -> KeywordReport:
    """Count case-folded keywords over the ``top_n`` best-ranked works.

    Each keyword counts once per work.  Controls are skipped unless
    ``include_controls`` is set.  Asking for more works than the list
    holds uses what is there and sets ``truncated``.
    """
    if top_n < 1:
        raise ValueError("top_n must be at least 1")
    pool = [e for e in ranked.entries if include_controls or not e.is_control]
    chosen = pool[:top_n]
    counts: dict[str, int] = {}
    for entry in chosen:
        for kw in {k.casefold() for k in works[entry.work_id].keywords if k.strip()}:
            counts[kw] = counts.get(kw, 0) + 1
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kind = "ranked works" if include_controls else "ranked non-control works"
    return KeywordReport(ordered, f"top {len(chosen)} {kind}", len(chosen), truncated=len(chosen) < top_n)


def validation_summary(ranked: RankedList, n_controls: int, n_evaluated: int | None = None) -> str:
    """One-paragraph account of how many works passed Q1 and where the controls landed."""
    passed = len(ranked)
    found = len(ranked.control_positions)
    lines = []
    head = f"{passed} works passed the Q1 filter"
    if ranked.q1_threshold is not None:
        head += f" (threshold {ranked.q1_threshold:g})"
    if n_evaluated is not None:
        head += f" out of {n_evaluated} evaluated"
    lines.append(head + ".")
    positions = ", ".join(str(p) for p in ranked.control_positions) or "none"
    lines.append(f"{found} of {n_controls} positive controls passed the filter, ranked at positions {positions}.")
    lines.append(f"Top tie group size: {ranked.top_tie_size}; tied pairs: {ranked.tied_pairs}.")
    return "\n".join(lines)


def rank_curve(ranked: RankedList) -> list[tuple[int, str, float, bool]]:
    """Rank against score, the series behind a rank-score plot."""
    return [(e.rank, e.work_id, e.score, e.is_control) for e in ranked.entries]


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, (float, np.floating)):
        return "NA" if np.isnan(value) else repr(float(value))
    return str(value)


def write_table(path: str | Path, header: list[str], rows) -> int:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return Path(path).stat().st_size


@singledispatch
def export_report(obj, path: str | Path, format: str = "csv") -> int:
    """Write an analysis artifact to ``path``.  Returns bytes written."""
    raise TypeError(f"cannot export {type(obj).__name__}")


@export_report.register
def _(obj: KeywordReport, path, format="csv"):
    if format == "json":
        return _write_json(path, {"selection": obj.selection, "n_works": obj.n_works,
                                  "truncated": obj.truncated, "counts": obj.counts})
    return write_table(path, ["keyword", "count"], obj.counts)


@export_report.register
def _(obj: MeanScoreTable, path, format="csv"):
    rows = ([w, *(obj.entries[(w, q)] for q in QUESTION_KEYS)] for w in obj.works)
    return write_table(path, ["work_id", *QUESTION_KEYS], rows)


@export_report.register
def _(obj: CorrelationMatrix, path, format="csv"):
    names = [f"{s}|{q}" for s, q in obj.labels]
    rows = ([name, *(obj.values[i, j] if obj.defined[i, j] else None for j in range(len(names)))]
            for i, name in enumerate(names))
    return write_table(path, ["label", *names], rows)


@export_report.register
def _(obj: RankedList, path, format="csv"):
    return write_table(path, ["rank", "work_id", "score", "is_control"],
                       ([r, w, s, int(c)] for r, w, s, c in rank_curve(obj)))


@export_report.register
def _(obj: AgreementReport, path, format="csv"):
    if format == "json":
        return _write_json(path, agreement_to_dict(obj))
    return write_table(path, *kappa_grid(obj))


def kappa_grid(report: AgreementReport) -> tuple[list[str], list[list]]:
    """One row per question, one column per source compared with the reference."""
    pairs = report.pairs
    header = ["question", *(other for _, other in pairs)]
    rows = [[q, *(report.kappa[(q, pair)] for pair in pairs)] for q in QUESTION_KEYS]
    return header, rows


def kappa_sum_rows(report: AgreementReport) -> tuple[list[str], list[list]]:
    return ["reference", "compared", "kappa_sum"], [[a, b, s] for (a, b), s in report.kappa_sum.items()]


def agreement_to_dict(report: AgreementReport) -> dict:
    corr = report.correlation
    return {
        "kappa": [
            {"question": q, "reference": a, "compared": b, "kappa": k, "degenerate": (q, (a, b)) in report.degenerate}
            for (q, (a, b)), k in report.kappa.items()
        ],
        "kappa_sum": [{"reference": a, "compared": b, "sum": s} for (a, b), s in report.kappa_sum.items()],
        "correlation": {
            "labels": [f"{s}|{q}" for s, q in corr.labels],
            "values": [[float(corr.values[i, j]) if corr.defined[i, j] else None
                        for j in range(len(corr.labels))] for i in range(len(corr.labels))],
        },
    }


def _write_json(path, data) -> int:
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")
    return len(text.encode("utf-8"))


def read_table(path: str | Path) -> tuple[list[str], list[list]]:
    """Read back a CSV export; numeric cells become int/float, ``NA`` becomes None.

    Identifier columns (keywords, work ids, labels) stay strings.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        rows = [[c if h in _TEXT_COLUMNS else _parse_cell(c) for h, c in zip(header, row)] for row in reader]
    return header, rows


_TEXT_COLUMNS = {"keyword", "work_id", "label", "question", "reference", "compared"}


def _parse_cell(cell: str):
    if cell == "NA":
        return None
    for conv in (int, float):
        try:
            return conv(cell)
        except ValueError:
            pass
    return cell
