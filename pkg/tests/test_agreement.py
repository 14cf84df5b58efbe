import math
import random

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from climrank.agreement import (
    MeanScoreTable,
    agreement_report,
    cohens_kappa,
    correlation_matrix,
    kappa_detail,
    majority_binarize,
    mean_scores,
    pearson,
)
from climrank.errors import AlignmentError, SchemaError
from climrank.evaluator import EvaluationDataset, EvaluationRecord
from climrank.rubric import BINARY, QUESTION_KEYS, SCALAR10, ScoreVector
from tests.oracles import kappa_from_table, pearson_stdlib


def _dataset(rows, source="human", mode=BINARY):
    """rows: {(work, rater): {Q: value}} with unspecified questions set to the minimum."""
    fill = 0 if mode == BINARY else 1
    records = [EvaluationRecord(w, r, source, ScoreVector(mode, {**dict.fromkeys(QUESTION_KEYS, fill), **v}))
               for (w, r), v in rows.items()]
    works = list(dict.fromkeys(w for w, _ in rows))
    return EvaluationDataset(records, works, {source: len({r for _, r in rows})})


def _table(columns, source="s", mode=BINARY):
    """columns: {Q: [values per work]}; questions not given copy Q1."""
    n = len(next(iter(columns.values())))
    works = [f"W{i}" for i in range(n)]
    entries = {(w, q): float(columns.get(q, columns.get("Q1", [0.0] * n))[i])
               for i, w in enumerate(works) for q in QUESTION_KEYS}
    return MeanScoreTable(entries, source, 1, mode, works)


class TestMeanScores:
    def test_binary_mean(self):
        ds = _dataset({("W1", "a"): {"Q1": 1}, ("W1", "b"): {"Q1": 0}})
        assert mean_scores(ds)[("W1", "Q1")] == 0.5

    def test_scalar_scaled(self):
        ds = _dataset({("W1", "0"): {"Q2": 6}, ("W1", "1"): {"Q2": 8}}, "llm_context", SCALAR10)
        table = mean_scores(ds)
        assert table[("W1", "Q2")] == pytest.approx(0.7)
        assert table.label == "llm_context:scalar10"

    def test_partial_raters(self):
        ds = _dataset({("W1", "a"): {"Q3": 1}, ("W1", "b"): {"Q3": 1}, ("W1", "c"): {"Q3": 1},
                       ("W1", "d"): {"Q3": 1}, ("W1", "e"): {"Q3": 0}})
        assert mean_scores(ds)[("W1", "Q3")] == pytest.approx(0.8)

    def test_unrated_work_warns(self):
        ds = _dataset({("W1", "a"): {}})
        ds.works.append("W2")
        with pytest.warns(UserWarning, match="W2"):
            table = mean_scores(ds)
        assert table.works == ["W1"]

    def test_mixed_sources_need_choice(self):
        a = _dataset({("W1", "a"): {}})
        b = _dataset({("W1", "0"): {}}, "llm_context")
        both = EvaluationDataset(a.records + b.records, ["W1"], {"human": 1, "llm_context": 1})
        with pytest.raises(SchemaError):
            mean_scores(both)
        assert mean_scores(both, "llm_context").source == "llm_context"

    def test_binarize_tie_is_yes(self):
        t = _table({"Q1": [0.5, 0.49, 1.0, 0.0]})
        b = majority_binarize(t)
        assert [b[(f"W{i}", "Q1")] for i in range(4)] == [1, 0, 1, 0]


binary_pairs = st.integers(2, 60).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 1), min_size=n, max_size=n),
                        st.lists(st.integers(0, 1), min_size=n, max_size=n)))


class TestKappa:
    def test_perfect(self):
        assert cohens_kappa([1, 0, 1, 0], [1, 0, 1, 0]) == 1.0

    def test_perfect_disagreement(self):
        assert cohens_kappa([1, 1, 0, 0], [0, 0, 1, 1]) == -1.0

    def test_worked_example(self):
        # 20 items: 9 yes/yes, 9 no/no, 1 each way; Po = .9, Pe = .5
        a = [1] * 10 + [0] * 10
        b = [1] * 9 + [0] + [1] + [0] * 9
        res = kappa_detail(a, b)
        assert res.observed == pytest.approx(0.9) and res.expected == pytest.approx(0.5)
        assert res.kappa == pytest.approx(0.8, abs=1e-12)

    def test_both_constant(self):
        assert kappa_detail([1, 1, 1], [1, 1, 1]) == (1.0, 1.0, 1.0, True)
        assert kappa_detail([0, 0], [1, 1]).kappa == -1.0

    def test_one_constant_is_zero(self):
        assert cohens_kappa([1, 1, 1, 1], [1, 0, 1, 0]) == 0.0

    @pytest.mark.parametrize("a,b", [([1, 0], [1, 0, 1]), ([1], [1])])
    def test_misaligned(self, a, b):
        with pytest.raises(AlignmentError):
            cohens_kappa(a, b)

    def test_non_binary(self):
        with pytest.raises(SchemaError):
            cohens_kappa([0, 2], [0, 1])

    @given(binary_pairs)
    def test_matches_contingency_oracle(self, pair):
        a, b = pair
        res = kappa_detail(a, b)
        if not res.degenerate and res.expected != 1:
            assert res.kappa == pytest.approx(kappa_from_table(a, b), abs=1e-12)
        assert -1.0 <= res.kappa <= 1.0

    @given(binary_pairs)
    def test_symmetric(self, pair):
        a, b = pair
        assert cohens_kappa(a, b) == pytest.approx(cohens_kappa(b, a), abs=1e-15)


unit_vectors = st.integers(3, 40).flatmap(
    lambda n: st.tuples(st.lists(st.floats(0, 1), min_size=n, max_size=n),
                        st.lists(st.floats(0, 1), min_size=n, max_size=n)))


class TestPearson:
    def test_hand_value(self):
        assert pearson([1, 0, 1, 0], [1, 0, 0, 0]) == pytest.approx(0.5 / math.sqrt(0.75), abs=1e-12)

    def test_identical(self):
        x = [0.1, 0.7, 0.3, 0.3]
        assert pearson(x, x) == 1.0

    def test_negated(self):
        assert pearson([0, 1, 2], [2, 1, 0]) == pytest.approx(-1.0)

    def test_constant_is_undefined(self):
        assert pearson([0.5, 0.5, 0.5], [0, 1, 0]) is None

    @given(unit_vectors)
    def test_matches_stdlib(self, pair):
        x, y = pair
        r = pearson(x, y)
        if r is None:
            assert np.ptp(x) == 0 or np.ptp(y) == 0
            return
        assume(np.std(x) > 1e-6 and np.std(y) > 1e-6)
        assert r == pytest.approx(pearson_stdlib(x, y), abs=1e-10)

    @given(unit_vectors, st.floats(0.1, 10), st.floats(-5, 5))
    def test_affine_invariant(self, pair, a, b):
        x, y = pair
        assume(np.std(x) > 1e-3 and np.std(y) > 1e-3)
        assert pearson([a * v + b for v in x], y) == pytest.approx(pearson(x, y), abs=1e-9)


class TestMatrix:
    def _tables(self, seed=0):
        rng = random.Random(seed)
        return [_table({q: [rng.random() for _ in range(12)] for q in QUESTION_KEYS}, src)
                for src in ("human", "llm_context")]

    def test_symmetric_unit_diagonal(self):
        m = correlation_matrix(self._tables())
        assert m.values.shape == (14, 14)
        assert np.allclose(m.values, m.values.T)
        assert np.all(np.diag(m.values) == 1.0)

    def test_identical_tables_mirror(self):
        t = self._tables()[0]
        twin = MeanScoreTable(dict(t.entries), "llm_context", 1, BINARY, list(t.works))
        m = correlation_matrix([t, twin])
        assert np.array_equal(m.values[:7, 7:], m.values[:7, :7])
        assert all(m.values[i, 7 + i] == 1.0 for i in range(7))

    def test_equal_questions_correlate_fully(self):
        t = _table({"Q1": [0, 0.5, 1, 0.2], "Q2": [1, 0, 0, 1], "Q3": [0.1, 0.2, 0.3, 0.9],
                    "Q4": [1, 1, 0, 0], "Q5": [0.3, 0.1, 0.4, 0.1], "Q6": [0, 0.5, 1, 0.2], "Q7": [1, 0, 1, 1]})
        m = correlation_matrix([t])
        assert m.get(("s", "Q1"), ("s", "Q6")) == 1.0

    def test_constant_column_undefined(self):
        t = _table({"Q1": [0.2, 0.4, 0.6], "Q2": [1, 1, 1]})
        m = correlation_matrix([t])
        assert m.get(("s", "Q2"), ("s", "Q1")) is None
        assert ("s", "Q2") in m.undefined_labels

    def test_mismatched_works(self):
        a = _table({"Q1": [0.1, 0.2, 0.3]})
        b = _table({"Q1": [0.1, 0.2]})
        with pytest.raises(AlignmentError):
            correlation_matrix([a, b])


def test_agreement_report():
    rng = random.Random(5)
    ref = _table({q: [rng.randint(0, 1) for _ in range(30)] for q in QUESTION_KEYS}, "human")
    same = MeanScoreTable(dict(ref.entries), "llm_context", 6, BINARY, list(ref.works))
    flipped = MeanScoreTable({k: 1.0 - v for k, v in ref.entries.items()}, "llm_no_shot", 6, BINARY, list(ref.works))
    report = agreement_report(ref, [same, flipped])
    assert report.pairs == [("human", "llm_context"), ("human", "llm_no_shot")]
    assert report.kappa_sum[("human", "llm_context")] == 7.0
    expected = sum(kappa_from_table([int(ref[(w, q)]) for w in ref.works], [1 - int(ref[(w, q)]) for w in ref.works])
                   for q in QUESTION_KEYS)
    assert report.kappa_sum[("human", "llm_no_shot")] == pytest.approx(expected, abs=1e-12)
    assert all(report.kappa[(q, ("human", "llm_no_shot"))] < 0 for q in QUESTION_KEYS)
    assert report.correlation.values.shape == (21, 21)
