import json

import httpx
import pytest
from hypothesis import given, strategies as st

from climrank import synthetic
from climrank.errors import (
    ConfigurationError,
    DecodeError,
    EmptyAbstractError,
    PositionConflictError,
    TransportError,
)
from climrank.openalex import (
    FixtureTransport,
    OpenAlexClient,
    QuerySpec,
    RawWork,
    Topic,
    build_query,
    filter_works,
    invert_abstract,
    reconstruct_abstract,
    write_fixture_pages,
)

LISTING_FILTER = (
    "authorships.institutions.country_code:GB,"
    "type:article|preprint|book-chapter|dissertation,"
    "authorships.is_corresponding:true,"
    "authorships.affiliations.institution_ids:https://openalex.org/I82284825|https://openalex.org/I47508984|"
    "https://openalex.org/I98677209|https://openalex.org/I130828816|https://openalex.org/I241749|"
    "https://openalex.org/I4210092773,"
    "publication_year:>1999,"
    "primary_topic.domain.id:!2,"
    "primary_topic.domain.id:!4"
)


class TestBuildQuery:
    def test_reference_harvest_filter_chain(self):
        params = build_query(QuerySpec.uk_defaults())
        assert params == {"filter": LISTING_FILTER}

    def test_contact_email_goes_to_polite_pool(self):
        params = build_query(QuerySpec.uk_defaults(contact_email="me@example.org"))
        assert params["mailto"] == "me@example.org"

    def test_minimal_config(self):
        spec = QuerySpec(institution_ids=("https://openalex.org/I241749",))
        clauses = build_query(spec)["filter"].split(",")
        assert clauses == [
            "type:article|preprint|book-chapter|dissertation",
            "authorships.is_corresponding:true",
            "authorships.affiliations.institution_ids:https://openalex.org/I241749",
            "publication_year:>1999",
        ]

    def test_deterministic_regardless_of_set_order(self):
        a = QuerySpec(("I1",), excluded_domain_ids={"4", "2"}, work_types={"preprint", "article"})
        b = QuerySpec(("I1",), excluded_domain_ids={"2", "4"}, work_types={"article", "preprint"})
        assert build_query(a) == build_query(b)

    def test_empty_institutions_rejected(self):
        with pytest.raises(ConfigurationError):
            build_query(QuerySpec(institution_ids=()))

    def test_institution_filter_can_be_disabled(self):
        params = build_query(QuerySpec(filter_institutions=False, country_code="GB"))
        assert "institution_ids" not in params["filter"]

    @pytest.mark.parametrize("bad", ["X123", "I12a", "https://example.org/I1", ""])
    def test_bad_institution_id(self, bad):
        with pytest.raises(ConfigurationError):
            build_query(QuerySpec(institution_ids=(bad,)))

    def test_unknown_work_type(self):
        with pytest.raises(ConfigurationError):
            build_query(QuerySpec(("I1",), work_types={"article", "dataset"}))

    @pytest.mark.parametrize("year", [999, 3000])
    def test_year_bounds(self, year):
        with pytest.raises(ConfigurationError):
            build_query(QuerySpec(("I1",), min_publication_year=year))


class TestReconstructAbstract:
    def test_sequential(self):
        idx = {"Climate": [0], "change": [1], "is": [2], "real": [3]}
        assert reconstruct_abstract(idx) == "Climate change is real"

    def test_repeated_words(self):
        idx = {"to": [0, 4], "be": [1, 5], "or": [2], "not": [3]}
        assert reconstruct_abstract(idx) == "to be or not to be"

    def test_collision(self):
        with pytest.raises(PositionConflictError):
            reconstruct_abstract({"a": [0], "b": [0]})

    def test_gaps_closed(self):
        assert reconstruct_abstract({"a": [0], "b": [3], "c": [7]}) == "a b c"

    @pytest.mark.parametrize("idx", [{}, None, {"a": []}])
    def test_empty(self, idx):
        with pytest.raises(EmptyAbstractError):
            reconstruct_abstract(idx)

    @given(st.lists(st.text(alphabet=st.characters(blacklist_categories=("Zs", "Cc")), min_size=1), min_size=1))
    def test_invert_roundtrip(self, tokens):
        tokens = [t for t in tokens if t.split() == [t]]
        if not tokens:
            return
        text = " ".join(tokens)
        assert reconstruct_abstract(invert_abstract(text)) == text


def _work(wid, topics, abstract=True):
    return RawWork(
        openalex_id=wid,
        title=wid,
        abstract_inverted_index={"some": [0], "text": [1]} if abstract else None,
        publication_year=2010,
        work_type="article",
        topics=tuple(Topic(t, "S1", "3") for t in topics),
    )


class TestFilterWorks:
    def test_no_abstract_excluded(self):
        assert filter_works([_work("W1", ["T1"], abstract=False)], {"T1"}) == []

    def test_full_containment_retained(self):
        w = _work("W1", ["T1", "T2"])
        assert filter_works([w], {"T1", "T2", "T3"}) == [w]

    def test_any_out_of_scope_topic_excludes(self):
        assert filter_works([_work("W1", ["T1", "T9"])], {"T1", "T2", "T3"}) == []

    def test_no_topics_excluded(self):
        assert filter_works([_work("W1", [])], {"T1"}) == []

    def test_conflicting_index_excluded(self):
        w = RawWork("W1", "t", {"a": [0], "b": [0]}, 2010, "article", (Topic("T1", "", ""),))
        assert filter_works([w], {"T1"}) == []

    def test_url_ids_in_whitelist(self):
        w = _work("W1", ["T1"])
        assert filter_works([w], {"https://openalex.org/T1"}) == [w]

    def test_empty_whitelist_rejected(self):
        with pytest.raises(ConfigurationError):
            filter_works([], set())

    topic_lists = st.lists(st.sampled_from([f"T{i}" for i in range(8)]), min_size=0, max_size=4, unique=True)

    @given(st.lists(st.tuples(topic_lists, st.booleans()), max_size=20),
           st.sets(st.sampled_from([f"T{i}" for i in range(8)]), min_size=1))
    def test_idempotent_and_order_preserving(self, specs, whitelist):
        works = [_work(f"W{i}", t, a) for i, (t, a) in enumerate(specs)]
        once = filter_works(works, whitelist)
        assert filter_works(once, whitelist) == once
        positions = [works.index(w) for w in once]
        assert positions == sorted(positions)

    @given(st.lists(st.tuples(topic_lists, st.booleans()), max_size=20),
           st.sets(st.sampled_from([f"T{i}" for i in range(8)]), min_size=2))
    def test_monotone_in_whitelist(self, specs, whitelist):
        works = [_work(f"W{i}", t, a) for i, (t, a) in enumerate(specs)]
        smaller = set(sorted(whitelist)[1:])
        assert set(map(id, filter_works(works, smaller))) <= set(map(id, filter_works(works, whitelist)))


def test_raw_work_from_api_parses_shape():
    item = synthetic.synthetic_raw_works(1, seed=5)[0]
    work = RawWork.from_api(item)
    assert work.openalex_id.startswith("W")
    assert all(t.topic_id.startswith("T") and t.domain_id == "3" for t in work.topics)
    assert reconstruct_abstract(work.abstract_inverted_index).endswith(".")


def test_raw_work_without_id():
    with pytest.raises(DecodeError):
        RawWork.from_api({"title": "x"})


# -- fetching ----------------------------------------------------------------


def _fixture_records(n):
    return synthetic.synthetic_raw_works(n, seed=2)


class TestFetchWorks:
    def test_pagination_three_works(self, tmp_path):
        write_fixture_pages(_fixture_records(3), tmp_path, page_size=3)
        spec = QuerySpec.uk_defaults()
        with OpenAlexClient(str(tmp_path)) as client:
            first, cursor = client.fetch_works(spec, page_size=2)
            assert len(first) == 2 and cursor is not None
            second, cursor = client.fetch_works(spec, page_size=2, cursor=cursor)
            assert len(second) == 1 and cursor is None

    def test_replay_is_deterministic(self, tmp_path):
        write_fixture_pages(_fixture_records(7), tmp_path, page_size=4)
        spec = QuerySpec.uk_defaults()
        with OpenAlexClient(f"file://{tmp_path}") as a, OpenAlexClient(f"file://{tmp_path}") as b:
            assert a.fetch_works(spec, 3, "fx:3") == b.fetch_works(spec, 3, "fx:3")

    @pytest.mark.parametrize("page_size", [1, 2, 5, 13, 200])
    def test_exhaustive_without_duplicates(self, tmp_path, page_size):
        records = synthetic.synthetic_raw_works(20, seed=4, n_excluded_domain=3, n_old=2)
        write_fixture_pages(records, tmp_path, page_size=6)
        with OpenAlexClient(str(tmp_path)) as client:
            got = [w.openalex_id for w in client.iter_works(QuerySpec.uk_defaults(), page_size)]
        assert len(got) == len(set(got)) == 20
        expected = {RawWork.from_api(r).openalex_id for r in records
                    if r["publication_year"] > 1999 and not r["primary_topic"]["domain"]["id"].endswith("/2")}
        assert set(got) == expected

    def test_page_size_bounds(self, tmp_path):
        with OpenAlexClient(str(tmp_path)) as client:
            for bad in (0, 201):
                with pytest.raises(ConfigurationError):
                    client.fetch_works(QuerySpec.uk_defaults(), bad)

    def test_empty_fixture(self, tmp_path):
        with OpenAlexClient(str(tmp_path)) as client:
            assert list(client.iter_works(QuerySpec.uk_defaults())) == []


class Scripted(httpx.BaseTransport):
    """Replays (status, body) pairs and records the requests it saw."""

    def __init__(self, script):
        self.script = list(script)
        self.requests = []

    def handle_request(self, request):
        self.requests.append(request)
        status, body = self.script.pop(0)
        content = body if isinstance(body, bytes) else json.dumps(body).encode()
        return httpx.Response(status, content=content, headers={"content-type": "application/json"})


OK_BODY = {"meta": {"next_cursor": None}, "results": _fixture_records(2)}


class TestRetries:
    def _client(self, script, **kw):
        sleeps = []
        transport = Scripted(script)
        client = OpenAlexClient("https://api.example", transport=transport, sleep=sleeps.append,
                                requests_per_second=None, **kw)
        return client, transport, sleeps

    def test_429_twice_then_ok(self):
        client, transport, sleeps = self._client([(429, {}), (429, {}), (200, OK_BODY)])
        works, cursor = client.fetch_works(QuerySpec.uk_defaults(), 25)
        assert len(works) == 2 and cursor is None
        assert client.stats.last_retries == 2
        assert len(transport.requests) == 3
        assert sleeps == [1.0, 2.0]

    def test_retry_after_header_honoured(self):
        class RA(Scripted):
            def handle_request(self, request):
                self.requests.append(request)
                if len(self.requests) == 1:
                    return httpx.Response(503, headers={"Retry-After": "7"})
                return httpx.Response(200, json=OK_BODY)

        sleeps = []
        client = OpenAlexClient("https://x", transport=RA([]), sleep=sleeps.append, requests_per_second=None)
        client.fetch_works(QuerySpec.uk_defaults())
        assert sleeps == [7.0]

    def test_gives_up_after_max_retries(self):
        client, transport, sleeps = self._client([(500, {})] * 6)
        with pytest.raises(TransportError) as err:
            client.fetch_works(QuerySpec.uk_defaults())
        assert err.value.status == 500 and err.value.retries == 5
        assert sleeps == [1.0, 2.0, 4.0, 8.0, 16.0]

    def test_client_error_not_retried(self):
        client, transport, _ = self._client([(403, {})])
        with pytest.raises(TransportError) as err:
            client.fetch_works(QuerySpec.uk_defaults())
        assert err.value.status == 403 and len(transport.requests) == 1

    def test_invalid_body(self):
        client, _, _ = self._client([(200, b"<html>oops")])
        with pytest.raises(DecodeError):
            client.fetch_works(QuerySpec.uk_defaults())

    def test_bad_record_fails_whole_page(self):
        body = {"meta": {}, "results": [_fixture_records(1)[0], {"id": "W9", "topics": [{"no": "id"}]}]}
        client, _, _ = self._client([(200, body)])
        with pytest.raises(DecodeError) as err:
            client.fetch_works(QuerySpec.uk_defaults())
        assert err.value.record_id == "W9"

    def test_missing_results_array(self):
        client, _, _ = self._client([(200, {"meta": {}})])
        with pytest.raises(DecodeError):
            client.fetch_works(QuerySpec.uk_defaults())

    def test_query_parameters_sent(self):
        client, transport, _ = self._client([(200, OK_BODY)])
        client.fetch_works(QuerySpec.uk_defaults(contact_email="a@b.c"), 50, "abc")
        params = transport.requests[0].url.params
        assert params["filter"] == LISTING_FILTER
        assert params["mailto"] == "a@b.c"
        assert params["per-page"] == "50" and params["cursor"] == "abc"


def test_rate_limit_spaces_requests():
    now = [0.0]
    sleeps = []

    def sleep(s):
        sleeps.append(s)
        now[0] += s

    transport = Scripted([(200, OK_BODY)] * 3)
    client = OpenAlexClient("https://x", transport=transport, sleep=sleep, clock=lambda: now[0],
                            requests_per_second=4)
    for _ in range(3):
        client.fetch_works(QuerySpec.uk_defaults())
    assert sleeps == [0.25, 0.25]


def test_fixture_transport_rejects_unknown_filter(tmp_path):
    write_fixture_pages(_fixture_records(2), tmp_path)
    client = httpx.Client(transport=FixtureTransport(tmp_path), base_url="http://f")
    assert client.get("/works", params={"filter": "bogus.key:1"}).status_code == 400
    assert client.get("/authors").status_code == 404
