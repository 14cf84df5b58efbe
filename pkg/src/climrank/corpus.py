"""Corpus persistence, seeded sampling and positive-control spiking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DuplicateIdError, LoadError, SampleSizeError
from .openalex import RawWork, reconstruct_abstract

HARVESTED = "harvested"
CONTROL = "control"
SOURCES = (HARVESTED, CONTROL)

_FIELDS = ("work_id", "title", "abstract", "publication_year", "topics", "keywords", "is_control", "source")


@dataclass(frozen=True)
class WorkRecord:
    work_id: str
    title: str
    abstract: str
    publication_year: int | None = None
    topics: tuple[str, ...] = ()
    keywords: tuple[str, ...] = ()
    is_control: bool = False
    source: str = HARVESTED

    def __post_init__(self):
        object.__setattr__(self, "topics", tuple(self.topics))
        object.__setattr__(self, "keywords", tuple(self.keywords))
        if not self.work_id:
            raise ValueError("work_id must be non-empty")
        if not self.abstract:
            raise ValueError(f"{self.work_id}: abstract must be non-empty")
        if self.source not in SOURCES:
            raise ValueError(f"{self.work_id}: unknown source {self.source!r}")
        if self.is_control != (self.source == CONTROL):
            raise ValueError(f"{self.work_id}: is_control must be true iff source is 'control'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["topics"] = list(self.topics)
        d["keywords"] = list(self.keywords)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "WorkRecord":
        missing = [k for k in ("work_id", "abstract") if not data.get(k)]
        if missing:
            raise ValueError(f"missing field(s): {', '.join(missing)}")
        extra = set(data) - set(_FIELDS)
        if extra:
            raise ValueError(f"unknown field(s): {', '.join(sorted(extra))}")
        source = data.get("source", CONTROL if data.get("is_control") else HARVESTED)
        return cls(
            work_id=str(data["work_id"]),
            title=str(data.get("title") or ""),
            abstract=str(data["abstract"]),
            publication_year=data.get("publication_year"),
            topics=tuple(data.get("topics") or ()),
            keywords=tuple(data.get("keywords") or ()),
            is_control=bool(data.get("is_control", source == CONTROL)),
            source=source,
        )

    def as_control(self) -> "WorkRecord":
        return replace(self, is_control=True, source=CONTROL)


def work_record_from_raw(raw: RawWork) -> WorkRecord:
    return WorkRecord(
        work_id=raw.openalex_id,
        title=raw.title,
        abstract=reconstruct_abstract(raw.abstract_inverted_index),
        publication_year=raw.publication_year,
        topics=tuple(t.topic_id for t in raw.topics),
        keywords=raw.keywords,
    )


def dumps_record(record: WorkRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True)


def save_corpus(records: Iterable[WorkRecord], path: str | Path) -> int:
    """Write one JSON object per line.  Returns the number of records written."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(dumps_record(record) + "\n")
            n += 1
    return n


def load_corpus(path: str | Path) -> list[WorkRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                if not isinstance(data, dict):
                    raise ValueError("record is not an object")
                records.append(WorkRecord.from_dict(data))
            except (ValueError, TypeError) as exc:
                raise LoadError(str(exc), line=lineno) from exc
    return records


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood 2014).

    Chosen over the interpreter's Mersenne Twister because its state update
    and output function fit in a few lines, so the sample for a given seed
    can be reproduced exactly by any implementation.
    """

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` by rejection, no modulo bias."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % bound


def _shuffle_prefix(items: list, k: int, rng: SplitMix64) -> list:
    # Forward Fisher-Yates, stopped after k swaps.
    n = len(items)
    for i in range(k):
        j = i + rng.below(n - i)
        items[i], items[j] = items[j], items[i]
    return items[:k]


def sample_random(corpus: Sequence[WorkRecord], n: int, seed: int) -> list[WorkRecord]:
    """Draw ``n`` records uniformly without replacement, deterministically per seed."""
    if n < 0 or n > len(corpus):
        raise SampleSizeError(f"cannot draw {n} records from a corpus of {len(corpus)}")
    return _shuffle_prefix(list(corpus), n, SplitMix64(seed))


@dataclass
class CorpusSample:
    records: list[WorkRecord]
    seed: int
    n_random: int
    n_controls: int

    def __post_init__(self):
        ids = [r.work_id for r in self.records]
        if len(ids) != len(set(ids)):
            raise DuplicateIdError("duplicate work ids in sample")
        if len(self.records) != self.n_random + self.n_controls:
            raise ValueError("record count does not match n_random + n_controls")
        if sum(r.is_control for r in self.records) != self.n_controls:
            raise ValueError("control count does not match n_controls")

    @property
    def work_ids(self) -> list[str]:
        return [r.work_id for r in self.records]

    @property
    def control_ids(self) -> set[str]:
        return {r.work_id for r in self.records if r.is_control}

    def lookup(self) -> dict[str, WorkRecord]:
        return {r.work_id: r for r in self.records}


# Keeps the control shuffle stream distinct from the sampling stream for the same seed.
_SPIKE_STREAM = 0x5BD1E995


def spike_controls(sample: Sequence[WorkRecord], controls: Sequence[WorkRecord], seed: int) -> CorpusSample:
    """Append controls (flagged) to a random sample and shuffle the whole list by seed."""
    sample_ids = {r.work_id for r in sample}
    seen: set[str] = set()
    for c in controls:
        if c.work_id in sample_ids or c.work_id in seen:
            raise DuplicateIdError(f"control id {c.work_id} collides with another record")
        seen.add(c.work_id)
    if not controls:
        return CorpusSample(list(sample), seed, len(sample), 0)
    combined = list(sample) + [c.as_control() for c in controls]
    rng = SplitMix64(seed ^ _SPIKE_STREAM)
    shuffled = _shuffle_prefix(combined, len(combined), rng)
    return CorpusSample(shuffled, seed, len(sample), len(controls))


def save_sample(sample: CorpusSample, path: str | Path) -> int:
    """Sample file: a header line with the seed and counts, then corpus lines."""
    header = {"n_controls": sample.n_controls, "n_random": sample.n_random, "seed": sample.seed}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"sample": header}, sort_keys=True) + "\n")
        for record in sample.records:
            fh.write(dumps_record(record) + "\n")
    return len(sample.records)


def load_sample(path: str | Path) -> CorpusSample:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        header = json.loads(first)["sample"]
    except (ValueError, KeyError, TypeError) as exc:
        raise LoadError("missing sample header", line=1) from exc
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if lineno == 1 or not line.strip():
                continue
            try:
                records.append(WorkRecord.from_dict(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise LoadError(str(exc), line=lineno) from exc
    return CorpusSample(records, int(header["seed"]), int(header["n_random"]), int(header["n_controls"]))
