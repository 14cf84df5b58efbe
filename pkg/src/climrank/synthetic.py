"""Synthetic OpenAlex-shaped works and positive controls for offline runs."""

from __future__ import annotations

import random
from pathlib import Path
from typing import Sequence

from .corpus import CONTROL, WorkRecord
from .openalex import OPENALEX_PREFIX, UK_INSTITUTIONS, invert_abstract, write_fixture_pages
from .providers import BiasMarker

IN_SCOPE_TOPICS = tuple(f"T{10000 + i}" for i in range(1, 41))
OUT_OF_SCOPE_TOPICS = tuple(f"T{12000 + i}" for i in range(1, 11))

CONTROL_MARKERS = ("carbon capture", "direct air capture", "perovskite photovoltaic", "green hydrogen", "thermal storage")

# Controls score high on technology, readiness, market and eco focus and low
# on enabling science and neglectedness.
DEFAULT_BIAS = tuple(
    BiasMarker(m, boost=("Q1", "Q2", "Q3", "Q4", "Q6"), suppress=("Q5", "Q7")) for m in CONTROL_MARKERS
)

_WORDS = (
    "analysis model data soil river sediment protein lattice catalyst membrane sensor network "
    "algorithm coastal forest urban polymer alloy quantum optical thermal fluid flow turbulence "
    "spectroscopy genome microbial climate rainfall drought glacier ocean aerosol particle crystal "
    "magnetic electron battery electrode grid wind solar biomass fuel cement steel concrete transport "
    "efficiency measurement simulation framework uncertainty observation regional global seasonal"
).split()

_KEYWORDS = (
    "carbon dioxide capture", "photovoltaics", "hydrology", "materials science", "machine learning",
    "ocean acidification", "energy storage", "catalysis", "remote sensing", "biodiversity",
    "thermal hybrid", "electrochemistry", "agriculture", "atmospheric chemistry", "wind energy",
)


def _abstract(rng: random.Random, n_words: int = 40) -> str:
    words = [rng.choice(_WORDS) for _ in range(n_words)]
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def _authorships(rng: random.Random) -> list[dict]:
    inst = OPENALEX_PREFIX + rng.choice(UK_INSTITUTIONS)
    return [{
        "is_corresponding": True,
        "institutions": [{"id": inst, "country_code": "GB"}],
        "affiliations": [{"institution_ids": [inst]}],
    }]


def raw_work(
    work_id: str,
    rng: random.Random,
    *,
    topics: Sequence[str],
    abstract: str | None,
    year: int = 2015,
    work_type: str = "article",
    domain: str = "3",
) -> dict:
    """One work in the shape served by the ``/works`` endpoint."""
    topic_objs = [
        {
            "id": OPENALEX_PREFIX + t,
            "display_name": f"Topic {t}",
            "subfield": {"id": f"{OPENALEX_PREFIX}subfields/{2100 + int(t[1:]) % 7}"},
            "domain": {"id": f"{OPENALEX_PREFIX}domains/{domain}"},
        }
        for t in topics
    ]
    authorships = _authorships(rng)
    return {
        "id": OPENALEX_PREFIX + work_id,
        "title": f"Study {work_id}: " + " ".join(rng.choice(_WORDS) for _ in range(4)),
        "publication_year": year,
        "type": work_type,
        "abstract_inverted_index": invert_abstract(abstract) if abstract else None,
        "topics": topic_objs,
        "primary_topic": topic_objs[0] if topic_objs else {"domain": {"id": f"{OPENALEX_PREFIX}domains/{domain}"}},
        "keywords": [{"display_name": k} for k in rng.sample(_KEYWORDS, rng.randint(0, 3))],
        "authorships": authorships,
        "corresponding_institution_ids": [a["institutions"][0]["id"] for a in authorships],
    }


def synthetic_raw_works(
    n_eligible: int,
    seed: int = 0,
    *,
    n_no_abstract: int = 0,
    n_no_topics: int = 0,
    n_out_of_scope: int = 0,
    n_excluded_domain: int = 0,
    n_old: int = 0,
) -> list[dict]:
    """Eligible works plus chosen numbers of works each eligibility rule should drop.

    ``n_excluded_domain`` and ``n_old`` are removed by the query itself;
    the others survive the query and are removed by topic/abstract filtering.
    """
    rng = random.Random(seed)
    out = []
    counter = 0

    def next_id():
        nonlocal counter
        counter += 1
        return f"W{seed % 1000:03d}{counter:06d}"

    def topics(k=None):
        return rng.sample(IN_SCOPE_TOPICS, k or rng.randint(1, 4))

    for _ in range(n_eligible):
        out.append(raw_work(next_id(), rng, topics=topics(), abstract=_abstract(rng), year=rng.randint(2000, 2024)))
    for _ in range(n_no_abstract):
        out.append(raw_work(next_id(), rng, topics=topics(), abstract=None))
    for _ in range(n_no_topics):
        out.append(raw_work(next_id(), rng, topics=[], abstract=_abstract(rng)))
    for _ in range(n_out_of_scope):
        ts = topics(rng.randint(1, 3)) + [rng.choice(OUT_OF_SCOPE_TOPICS)]
        out.append(raw_work(next_id(), rng, topics=ts, abstract=_abstract(rng)))
    for _ in range(n_excluded_domain):
        out.append(raw_work(next_id(), rng, topics=topics(), abstract=_abstract(rng), domain="2"))
    for _ in range(n_old):
        out.append(raw_work(next_id(), rng, topics=topics(), abstract=_abstract(rng), year=1995))
    rng.shuffle(out)
    return out


def synthetic_controls(n: int, seed: int = 0, markers: Sequence[str] = CONTROL_MARKERS) -> list[WorkRecord]:
    """Positive-control records whose abstracts each mention one marker phrase."""
    rng = random.Random(seed + 7919)
    records = []
    for i in range(n):
        marker = markers[i % len(markers)]
        abstract = _abstract(rng, 20) + f" We demonstrate a {marker} pilot plant ready for deployment. " + _abstract(rng, 15)
        records.append(WorkRecord(
            work_id=f"C{seed % 1000:03d}{i + 1:04d}",
            title=f"Scaling {marker}",
            abstract=abstract,
            publication_year=2018,
            topics=(IN_SCOPE_TOPICS[i % len(IN_SCOPE_TOPICS)],),
            keywords=(marker, "climate technology"),
            is_control=True,
            source=CONTROL,
        ))
    return records


def write_whitelist(path: str | Path, topics: Sequence[str] = IN_SCOPE_TOPICS) -> Path:
    path = Path(path)
    path.write_text("# in-scope topic ids\n" + "\n".join(topics) + "\n", encoding="utf-8")
    return path


def write_fixture(directory: str | Path, n_eligible: int, seed: int = 0, page_size: int = 50, **kwargs) -> list[Path]:
    return write_fixture_pages(synthetic_raw_works(n_eligible, seed, **kwargs), directory, page_size)
