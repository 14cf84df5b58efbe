"""OpenAlex works harvesting.

Query construction, cursor-paged fetching with rate limiting and retries,
abstract reconstruction from inverted indexes, and eligibility filtering.

The client talks to any OpenAlex-compatible ``/works`` endpoint through
``httpx``.  Offline runs swap the network for :class:`FixtureTransport`,
which serves recorded page envelopes from a directory.

Example:
    >>> spec = QuerySpec(institution_ids=("I82284825",), contact_email="me@example.org")
    >>> with OpenAlexClient() as client:
    ...     works, cursor = client.fetch_works(spec, page_size=25)
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping, NamedTuple

import httpx

from .errors import (
    ConfigurationError,
    DecodeError,
    EmptyAbstractError,
    AbstractError,
    PositionConflictError,
    TransportError,
)

logger = logging.getLogger(__name__)

OPENALEX_URL = "https://api.openalex.org"
OPENALEX_PREFIX = "https://openalex.org/"
ALLOWED_WORK_TYPES = ("article", "preprint", "book-chapter", "dissertation")
RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})
START_CURSOR = "*"

_INSTITUTION_RE = re.compile(r"^(?:https://openalex\.org/)?(I\d+)$")

# The six institutions of the original UK harvest, in query order.
UK_INSTITUTIONS = (
    "I82284825",
    "I47508984",
    "I98677209",
    "I130828816",
    "I241749",
    "I4210092773",
)
HEALTH_SCIENCES_DOMAIN = "2"
SOCIAL_SCIENCES_DOMAIN = "4"


def short_id(value: Any) -> str:
    """Strip the OpenAlex URL prefix: ``https://openalex.org/domains/2`` -> ``2``."""
    text = str(value).strip()
    if text.startswith(OPENALEX_PREFIX):
        text = text[len(OPENALEX_PREFIX):]
    return text.rsplit("/", 1)[-1]


@dataclass(frozen=True)
class QuerySpec:
    institution_ids: tuple[str, ...] = ()
    country_code: str | None = None
    work_types: frozenset[str] = frozenset(ALLOWED_WORK_TYPES)
    min_publication_year: int = 1999
    excluded_domain_ids: frozenset[str] = frozenset()
    corresponding_author_required: bool = True
    contact_email: str | None = None
    filter_institutions: bool = True

    def __post_init__(self):
        object.__setattr__(self, "institution_ids", tuple(self.institution_ids))
        object.__setattr__(self, "work_types", frozenset(self.work_types))
        object.__setattr__(
            self, "excluded_domain_ids", frozenset(short_id(d) for d in self.excluded_domain_ids)
        )

    def validate(self) -> None:
        if self.filter_institutions and not self.institution_ids:
            raise ConfigurationError("institution filtering is enabled but no institution ids were given")
        for inst in self.institution_ids:
            if not _INSTITUTION_RE.match(str(inst).strip()):
                raise ConfigurationError(f"invalid OpenAlex institution id: {inst!r}")
        if not self.work_types:
            raise ConfigurationError("at least one work type is required")
        unknown = self.work_types - set(ALLOWED_WORK_TYPES)
        if unknown:
            raise ConfigurationError(f"unsupported work types: {sorted(unknown)}")
        if not 1000 <= self.min_publication_year <= date.today().year:
            raise ConfigurationError(f"min_publication_year out of range: {self.min_publication_year}")

    @classmethod
    def uk_defaults(cls, contact_email: str | None = None) -> "QuerySpec":
        """The UK harvest: six institutions, GB, four work types, year > 1999, no health/social sciences."""
        return cls(
            institution_ids=UK_INSTITUTIONS,
            country_code="GB",
            excluded_domain_ids=frozenset({HEALTH_SCIENCES_DOMAIN, SOCIAL_SCIENCES_DOMAIN}),
            contact_email=contact_email,
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "QuerySpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigurationError(f"unknown query fields: {sorted(extra)}")
        return cls(**data)


def filter_clauses(spec: QuerySpec) -> list[str]:
    """Filter clauses in the order of the reference harvest query."""
    spec.validate()
    clauses = []
    if spec.country_code:
        clauses.append(f"authorships.institutions.country_code:{spec.country_code}")
    types = [t for t in ALLOWED_WORK_TYPES if t in spec.work_types]
    clauses.append("type:" + "|".join(types))
    if spec.corresponding_author_required:
        clauses.append("authorships.is_corresponding:true")
    if spec.filter_institutions:
        ids = [OPENALEX_PREFIX + _INSTITUTION_RE.match(str(i).strip()).group(1) for i in spec.institution_ids]
        clauses.append("authorships.affiliations.institution_ids:" + "|".join(ids))
    clauses.append(f"publication_year:>{spec.min_publication_year}")
    for domain in sorted(spec.excluded_domain_ids, key=lambda d: (len(d), d)):
        clauses.append(f"primary_topic.domain.id:!{domain}")
    return clauses


def build_query(spec: QuerySpec) -> dict[str, str]:
    """Query parameters for the ``/works`` endpoint.

    The contact email, when given, goes in ``mailto`` so requests land in
    the polite pool.
    """
    params = {"filter": ",".join(filter_clauses(spec))}
    if spec.contact_email:
        params["mailto"] = spec.contact_email
    return params


class Topic(NamedTuple):
    topic_id: str
    subfield_id: str
    domain_id: str


@dataclass(frozen=True)
class RawWork:
    openalex_id: str
    title: str
    abstract_inverted_index: dict[str, list[int]] | None
    publication_year: int | None
    work_type: str | None
    topics: tuple[Topic, ...] = ()
    keywords: tuple[str, ...] = ()
    corresponding_institutions: tuple[str, ...] = ()

    @classmethod
    def from_api(cls, item: Mapping[str, Any]) -> "RawWork":
        if not isinstance(item, Mapping):
            raise DecodeError(f"work record is not an object: {type(item).__name__}")
        work_id = item.get("id")
        if not work_id:
            raise DecodeError("work record without id")
        wid = short_id(work_id)
        try:
            topics = tuple(
                Topic(
                    short_id(t["id"]),
                    short_id((t.get("subfield") or {}).get("id", "")),
                    short_id((t.get("domain") or {}).get("id", "")),
                )
                for t in (item.get("topics") or [])
            )
            keywords = tuple(
                (k.get("display_name") if isinstance(k, Mapping) else str(k)) or ""
                for k in (item.get("keywords") or [])
            )
            index = item.get("abstract_inverted_index")
            if index is not None:
                index = {str(w): [int(p) for p in pos] for w, pos in index.items()}
            year = item.get("publication_year")
            return cls(
                openalex_id=wid,
                title=item.get("title") or item.get("display_name") or "",
                abstract_inverted_index=index,
                publication_year=int(year) if year is not None else None,
                work_type=item.get("type"),
                topics=topics,
                keywords=tuple(k for k in keywords if k),
                corresponding_institutions=tuple(
                    short_id(i) for i in (item.get("corresponding_institution_ids") or [])
                ),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise DecodeError(f"malformed work record {wid}: {exc}", record_id=wid) from exc


def reconstruct_abstract(index: Mapping[str, Iterable[int]] | None) -> str:
    """Rebuild abstract text from an inverted index.

    Words are placed at their positions and joined by single spaces.
    Missing positions are closed up rather than treated as errors.
    """
    if not index:
        raise EmptyAbstractError("abstract inverted index is empty")
    placed: dict[int, str] = {}
    for word, positions in index.items():
        for pos in positions:
            if not isinstance(pos, int) or isinstance(pos, bool) or pos < 0:
                raise AbstractError(f"invalid position {pos!r} for word {word!r}")
            if pos in placed:
                raise PositionConflictError(
                    f"position {pos} claimed by both {placed[pos]!r} and {word!r}"
                )
            placed[pos] = word
    if not placed:
        raise EmptyAbstractError("abstract inverted index has no positions")
    return " ".join(placed[p] for p in sorted(placed))


def invert_abstract(text: str) -> dict[str, list[int]]:
    index: dict[str, list[int]] = {}
    for pos, token in enumerate(text.split()):
        index.setdefault(token, []).append(pos)
    return index


def has_abstract(work: RawWork) -> bool:
    try:
        return bool(reconstruct_abstract(work.abstract_inverted_index))
    except AbstractError:
        return False


def filter_works(works: Iterable[RawWork], topic_whitelist: Iterable[str]) -> list[RawWork]:
    """Keep works with an abstract, at least one topic, and every topic whitelisted."""
    allowed = {short_id(t) for t in topic_whitelist}
    if not allowed:
        raise ConfigurationError("topic whitelist is empty")
    kept = []
    for work in works:
        if not work.topics or not has_abstract(work):
            continue
        if all(t.topic_id in allowed for t in work.topics):
            kept.append(work)
    return kept


def load_topic_whitelist(path: str | Path) -> set[str]:
    """Read one topic id per line; blank lines and ``#`` comments are ignored."""
    ids = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            ids.add(short_id(line))
    return ids


@dataclass
class FetchStats:
    requests: int = 0
    retries: int = 0
    last_retries: int = 0
    pages: int = 0
    works: int = 0


class OpenAlexClient:
    """Sequential cursor-paged client for the ``/works`` endpoint.

    Args:
        base_url: API root.  ``file://`` URLs and plain directory paths
            select fixture mode (see :class:`FixtureTransport`).
        requests_per_second: politeness cap; ``None`` disables it.
        max_retries: retries on 429/5xx and connection errors.
        backoff_base: first retry delay in seconds, doubled per attempt.
        transport: explicit ``httpx`` transport, mainly for tests.
        sleep, clock: injectable for deterministic tests.
    """

    def __init__(
        self,
        base_url: str = OPENALEX_URL,
        *,
        requests_per_second: float | None = 10.0,
        max_retries: int = 5,
        backoff_base: float = 1.0,
        backoff_cap: float = 60.0,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        if transport is None and _is_fixture_url(base_url):
            transport = FixtureTransport(_fixture_dir(base_url))
            base_url = "http://fixture.invalid"
            requests_per_second = None
        self._client = httpx.Client(base_url=base_url, timeout=timeout, transport=transport)
        self.min_interval = 1.0 / requests_per_second if requests_per_second else 0.0
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._sleep = sleep
        self._clock = clock
        self._last_request: float | None = None
        self.stats = FetchStats()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self) -> None:
        self._client.close()

    def _throttle(self) -> None:
        if self.min_interval and self._last_request is not None:
            wait = self.min_interval - (self._clock() - self._last_request)
            if wait > 0:
                self._sleep(wait)
        self._last_request = self._clock()

    def _backoff(self, attempt: int, response: httpx.Response | None) -> float:
        if response is not None:
            retry_after = response.headers.get("Retry-After")
            if retry_after is not None:
                try:
                    return min(self.backoff_cap, max(0.0, float(retry_after)))
                except ValueError:
                    pass
        return min(self.backoff_cap, self.backoff_base * 2**attempt)

    def get_json(self, path: str, params: Mapping[str, Any]) -> Any:
        retries = 0
        while True:
            self._throttle()
            self.stats.requests += 1
            response = None
            try:
                response = self._client.get(path, params=params)
            except httpx.TransportError as exc:
                if retries >= self.max_retries:
                    raise TransportError(f"request failed: {exc}", retries=retries) from exc
                reason = type(exc).__name__
            else:
                if response.status_code < 400:
                    break
                if response.status_code not in RETRY_STATUSES or retries >= self.max_retries:
                    raise TransportError(
                        f"HTTP {response.status_code} from {response.request.url}",
                        status=response.status_code,
                        retries=retries,
                    )
                reason = f"HTTP {response.status_code}"
            delay = self._backoff(retries, response)
            retries += 1
            self.stats.retries += 1
            logger.warning("%s, retry %d/%d in %.1fs", reason, retries, self.max_retries, delay)
            self._sleep(delay)
        self.stats.last_retries = retries
        try:
            return response.json()
        except ValueError as exc:
            raise DecodeError(f"response body is not JSON: {exc}") from exc

    def fetch_works(
        self, spec: QuerySpec, page_size: int = 200, cursor: str | None = START_CURSOR
    ) -> tuple[list[RawWork], str | None]:
        """Fetch one page.  Returns the works and the next cursor, ``None`` at the end.

        The page is decoded completely before anything is returned; a bad
        record fails the whole page.
        """
        if not 1 <= page_size <= 200:
            raise ConfigurationError(f"page_size must be in [1, 200], got {page_size}")
        if cursor is None:
            return [], None
        params = dict(build_query(spec))
        params["per-page"] = str(page_size)
        params["cursor"] = cursor
        body = self.get_json("/works", params)
        if not isinstance(body, Mapping) or not isinstance(body.get("results"), list):
            raise DecodeError("response envelope lacks a results array")
        works = [RawWork.from_api(item) for item in body["results"]]
        next_cursor = (body.get("meta") or {}).get("next_cursor")
        if not works:
            next_cursor = None
        self.stats.pages += 1
        self.stats.works += len(works)
        return works, next_cursor

    def iter_works(self, spec: QuerySpec, page_size: int = 200, max_works: int | None = None) -> Iterator[RawWork]:
        cursor: str | None = START_CURSOR
        seen: set[str] = set()
        count = 0
        while cursor is not None:
            works, cursor = self.fetch_works(spec, page_size, cursor)
            for work in works:
                if work.openalex_id in seen:
                    logger.warning("duplicate work %s skipped", work.openalex_id)
                    continue
                seen.add(work.openalex_id)
                yield work
                count += 1
                if max_works is not None and count >= max_works:
                    return


# -- fixture mode ------------------------------------------------------------

_PAGE_RE = re.compile(r"page_(\d+)\.json$")


def _is_fixture_url(url: str) -> bool:
    return url.startswith("file://") or Path(url).is_dir()


def _fixture_dir(url: str) -> Path:
    return Path(url[len("file://"):] if url.startswith("file://") else url)


def page_files(directory: str | Path) -> list[Path]:
    files = [p for p in Path(directory).iterdir() if _PAGE_RE.search(p.name)]
    return sorted(files, key=lambda p: int(_PAGE_RE.search(p.name).group(1)))


def write_fixture_pages(records: list[Mapping[str, Any]], directory: str | Path, page_size: int = 200) -> list[Path]:
    """Write raw work dicts as response envelopes ``page_0001.json``, ``page_0002.json``, ..."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    n_pages = max(1, -(-len(records) // page_size))
    for i in range(n_pages):
        chunk = records[i * page_size:(i + 1) * page_size]
        end = (i + 1) * page_size
        envelope = {
            "meta": {
                "count": len(records),
                "per_page": page_size,
                "next_cursor": f"fx:{end}" if end < len(records) else None,
            },
            "results": list(chunk),
        }
        path = out / f"page_{i + 1:04d}.json"
        path.write_text(json.dumps(envelope, indent=1, sort_keys=True), encoding="utf-8")
        paths.append(path)
    return paths


def _authorship_values(item: Mapping[str, Any], key: str) -> set[str]:
    values: set[str] = set()
    for auth in item.get("authorships") or []:
        if key == "is_corresponding":
            values.add(str(bool(auth.get("is_corresponding"))).lower())
        elif key == "institutions.country_code":
            values.update(str(i.get("country_code")) for i in auth.get("institutions") or [])
        elif key in ("affiliations.institution_ids", "institutions.id"):
            for aff in auth.get("affiliations") or []:
                values.update(short_id(i) for i in aff.get("institution_ids") or [])
            values.update(short_id(i.get("id")) for i in auth.get("institutions") or [])
    return values


def _match_clause(item: Mapping[str, Any], key: str, value: str) -> bool:
    negate = value.startswith("!")
    if negate:
        value = value[1:]
    options = {short_id(v) for v in value.split("|")}
    if key == "publication_year":
        year = item.get("publication_year")
        if year is None:
            return False
        if value.startswith(">"):
            ok = year > int(value[1:])
        elif value.startswith("<"):
            ok = year < int(value[1:])
        else:
            ok = str(year) in options
    elif key == "type":
        ok = item.get("type") in options
    elif key == "primary_topic.domain.id":
        domain = ((item.get("primary_topic") or {}).get("domain") or {}).get("id")
        ok = domain is not None and short_id(domain) in options
    elif key.startswith("authorships."):
        ok = bool(_authorship_values(item, key[len("authorships."):]) & options)
    else:
        raise KeyError(key)
    return ok != negate


class FixtureTransport(httpx.BaseTransport):
    """Serve ``/works`` from recorded page envelopes in a directory.

    Records from all ``page_NNNN.json`` files are concatenated, filtered by
    the request's ``filter`` parameter and re-paged by ``per-page``, so
    any page size and query replay deterministically.  Cursors are
    ``fx:<offset>`` tokens.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.records: list[dict] = []
        if self.directory.exists():
            for path in page_files(self.directory):
                body = json.loads(path.read_text(encoding="utf-8"))
                self.records.extend(body.get("results") or [])

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        if request.method != "GET" or not request.url.path.rstrip("/").endswith("/works"):
            return httpx.Response(404, json={"error": "not found"})
        params = request.url.params
        try:
            per_page = int(params.get("per-page") or params.get("per_page") or 25)
            cursor = params.get("cursor") or START_CURSOR
            offset = 0 if cursor == START_CURSOR else int(cursor.removeprefix("fx:"))
            clauses = [c.split(":", 1) for c in (params.get("filter") or "").split(",") if c]
            matched = [r for r in self.records if all(_match_clause(r, k, v) for k, v in clauses)]
        except (KeyError, ValueError) as exc:
            return httpx.Response(400, json={"error": f"bad request: {exc}"})
        page = matched[offset:offset + per_page]
        end = offset + per_page
        envelope = {
            "meta": {
                "count": len(matched),
                "per_page": per_page,
                "next_cursor": f"fx:{end}" if end < len(matched) else None,
            },
            "results": page,
        }
        return httpx.Response(200, json=envelope)
