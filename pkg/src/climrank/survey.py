"""Human survey responses: CSV ingestion and export."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from .errors import AlignmentError, ValidationError
from .evaluator import HUMAN, EvaluationDataset, EvaluationRecord
from .rubric import BINARY, QUESTION_KEYS, ScoreVector

HEADER = ["respondent_id", "work_id"] + [k.lower() for k in QUESTION_KEYS]


@dataclass
class SurveyIngest:
    dataset: EvaluationDataset
    missing: list[tuple[str, str]]

    @property
    def complete(self) -> bool:
        return not self.missing


def ingest_survey(path: str | Path, sample) -> SurveyIngest:
    """Read a survey CSV into a human-source dataset aligned with ``sample``.

    Row numbers in errors count the header as row 1.  Absent
    (respondent, work) pairs are reported in ``missing`` rather than
    raised, since real surveys have dropouts.
    """
    work_ids = list(getattr(sample, "work_ids", None) or [r.work_id for r in sample])
    known = set(work_ids)
    text = Path(path).read_text(encoding="utf-8-sig")
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise ValidationError("survey file is empty", row=1)
    if header != HEADER:
        raise ValidationError(f"expected header {','.join(HEADER)}", row=1)

    records = []
    seen = set()
    for rowno, row in enumerate(reader, 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(HEADER):
            raise ValidationError(f"expected {len(HEADER)} columns, got {len(row)}", row=rowno)
        respondent, work_id = row[0].strip(), row[1].strip()
        if not respondent or not work_id:
            raise ValidationError("empty respondent_id or work_id", row=rowno)
        if work_id not in known:
            raise AlignmentError(f"row {rowno}: unknown work_id {work_id!r}")
        if (respondent, work_id) in seen:
            raise ValidationError(f"duplicate response for ({respondent}, {work_id})", row=rowno)
        seen.add((respondent, work_id))
        values = {}
        for key, cell in zip(QUESTION_KEYS, row[2:]):
            cell = cell.strip()
            if cell not in ("0", "1"):
                raise ValidationError(f"{key} must be 0 or 1, got {cell!r}", row=rowno)
            values[key] = int(cell)
        records.append(EvaluationRecord(work_id, respondent, HUMAN, ScoreVector(BINARY, values)))

    respondents = sorted({r for r, _ in seen})
    missing = [(r, w) for r in respondents for w in work_ids if (r, w) not in seen]
    dataset = EvaluationDataset(records, work_ids, {HUMAN: len(respondents)})
    return SurveyIngest(dataset, missing)


def export_survey(dataset: EvaluationDataset, path: str | Path) -> int:
    """Write the human-source records of ``dataset`` in survey CSV form."""
    rows = [r for r in dataset.records if r.source == HUMAN]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for r in rows:
            writer.writerow([r.rater_id, r.work_id, *r.scores.as_tuple()])
    return len(rows)
