import json

import pytest
from hypothesis import given, strategies as st

from climrank.corpus import WorkRecord
from climrank.errors import ConfigurationError, ParseError, ScoreRangeError
from climrank.rubric import (
    ANTI_HALLUCINATION,
    BINARY,
    CONTEXT,
    DEFAULT_RUBRIC,
    FEW_SHOT,
    NO_SHOT,
    QUESTION_KEYS,
    SCALAR10,
    Exemplar,
    PromptScenario,
    ScoreVector,
    build_prompt,
    load_context,
    load_exemplars,
    parse_response,
)

WORK = WorkRecord("W42", "Porous sorbents", "We report a sorbent that binds CO2 at room temperature.")
EXEMPLARS = [Exemplar(f"Spin-out {i}", f"Exemplar abstract number {i}.") for i in range(10)]


class TestPrompt:
    def test_no_shot(self):
        text = build_prompt(WORK, PromptScenario.make(NO_SHOT), BINARY).text
        assert ANTI_HALLUCINATION in text
        assert WORK.abstract in text
        assert "Guidance" not in text and "Example 1" not in text
        for q in DEFAULT_RUBRIC.questions:
            assert q.text in text

    def test_context_includes_every_paragraph(self):
        text = build_prompt(WORK, PromptScenario.make(CONTEXT), BINARY).text
        for q in DEFAULT_RUBRIC.questions:
            assert q.context in text
        assert "Example 1" not in text

    def test_few_shot_examples_precede_target(self):
        text = build_prompt(WORK, PromptScenario.make(FEW_SHOT, exemplars=EXEMPLARS), BINARY).text
        target = text.index(WORK.abstract)
        positions = [text.index(ex.abstract) for ex in EXEMPLARS]
        assert len(positions) == 10
        assert positions == sorted(positions) and positions[-1] < target
        assert ANTI_HALLUCINATION in text

    def test_scalar_format(self):
        text = build_prompt(WORK, PromptScenario.make(NO_SHOT), SCALAR10).text
        assert "integer from 1 to 10" in text
        assert "1 for Yes or 0 for No" not in text

    def test_binary_format(self):
        assert "1 for Yes or 0 for No" in build_prompt(WORK, PromptScenario.make(NO_SHOT), BINARY).text

    def test_reemphasized_extends_prompt(self):
        p = build_prompt(WORK, PromptScenario.make(NO_SHOT), BINARY)
        again = p.reemphasized()
        assert again.startswith(p.text) and len(again) > len(p.text)

    @pytest.mark.parametrize("scenario", [
        PromptScenario("nonsense"),
        PromptScenario(NO_SHOT, {"Q1": "x"}),
        PromptScenario(CONTEXT),
        PromptScenario(FEW_SHOT, {"Q1": "x"}),
    ])
    def test_invalid_scenarios(self, scenario):
        with pytest.raises(ConfigurationError):
            build_prompt(WORK, scenario, BINARY)

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            build_prompt(WORK, PromptScenario.make(NO_SHOT), "scalar5")

    def test_custom_context(self, tmp_path):
        path = tmp_path / "ctx.json"
        path.write_text(json.dumps({"q1": "Custom mitigation guidance."}))
        rubric = DEFAULT_RUBRIC.with_context(load_context(path))
        text = build_prompt(WORK, PromptScenario.make(CONTEXT, rubric), BINARY, rubric).text
        assert "Custom mitigation guidance." in text

    def test_context_for_unknown_question(self):
        with pytest.raises(ConfigurationError):
            DEFAULT_RUBRIC.with_context({"Q8": "x"})

    def test_load_exemplars(self, tmp_path):
        path = tmp_path / "ex.jsonl"
        path.write_text("\n".join(json.dumps({"title": e.title, "abstract": e.abstract}) for e in EXEMPLARS))
        assert load_exemplars(path) == EXEMPLARS
        path.write_text('{"title": "no abstract"}\n')
        with pytest.raises(ConfigurationError):
            load_exemplars(path)

    def test_source_label(self):
        assert PromptScenario.make(CONTEXT).source == "llm_context"


def _reply(**values):
    base = dict.fromkeys(QUESTION_KEYS, 1)
    base.update(values)
    return json.dumps(base)


class TestParse:
    def test_happy_path(self):
        v = parse_response('{"Q1":1,"Q2":0,"Q3":1,"Q4":1,"Q5":0,"Q6":1,"Q7":0}', BINARY)
        assert v.as_tuple() == (1, 0, 1, 1, 0, 1, 0)

    def test_out_of_range(self):
        with pytest.raises(ScoreRangeError) as err:
            parse_response(_reply(Q3=11), SCALAR10)
        assert err.value.key == "Q3"

    def test_binary_rejects_two(self):
        with pytest.raises(ScoreRangeError):
            parse_response(_reply(Q2=2), BINARY)

    def test_scalar_rejects_zero(self):
        with pytest.raises(ScoreRangeError):
            parse_response(_reply(Q1=0), SCALAR10)

    def test_prose_around_object(self):
        raw = "Sure, here are my answers:\n" + _reply(Q7=0) + "\nLet me know if you need more."
        assert parse_response(raw, BINARY)["Q7"] == 0

    def test_fenced_block(self):
        raw = "```json\n" + _reply(Q1=7) + "\n```"
        assert parse_response(raw, SCALAR10)["Q1"] == 7

    def test_lowercase_keys(self):
        raw = json.dumps({k.lower(): 1 for k in QUESTION_KEYS})
        assert parse_response(raw, BINARY).as_tuple() == (1,) * 7

    def test_missing_key(self):
        obj = dict.fromkeys(QUESTION_KEYS[:-1], 1)
        with pytest.raises(ParseError) as err:
            parse_response(json.dumps(obj), BINARY)
        assert err.value.key == "Q7"

    def test_fractional(self):
        with pytest.raises(ScoreRangeError):
            parse_response(_reply(Q4=6.5), SCALAR10)

    def test_integral_float_accepted(self):
        assert parse_response(_reply(Q4=6.0), SCALAR10)["Q4"] == 6

    @pytest.mark.parametrize("value", ['"1"', "true", "null"])
    def test_non_numeric(self, value):
        raw = _reply().replace('"Q5": 1', f'"Q5": {value}')
        with pytest.raises(ParseError):
            parse_response(raw, BINARY)

    @pytest.mark.parametrize("raw", ["", "no json here", "{broken", '{"answer": "yes"}'])
    def test_nothing_usable(self, raw):
        with pytest.raises(ParseError):
            parse_response(raw, BINARY)

    @given(st.lists(st.integers(1, 10), min_size=7, max_size=7), st.text(max_size=30).filter(lambda s: "{" not in s))
    def test_any_valid_scalar_vector_parses(self, values, prose):
        raw = prose + json.dumps(dict(zip(QUESTION_KEYS, values)))
        assert list(parse_response(raw, SCALAR10).as_tuple()) == values

    def test_score_vector_rejects_extra_keys(self):
        with pytest.raises(ParseError):
            ScoreVector(BINARY, {**dict.fromkeys(QUESTION_KEYS, 0), "Q8": 1})
