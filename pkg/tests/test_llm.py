import json
from pathlib import Path

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eocrc.cohort import Label
from eocrc.errors import ConfigError, ParseError, TransportError
from eocrc.features import Windowed
from eocrc.llm import (
    MAX_TOKENS,
    TEMPERATURE,
    EndpointConfig,
    GuidelineSpec,
    HttpChatEndpoint,
    LLMPredictor,
    ParsedPrediction,
    build_prompt,
    build_system_text,
    export_finetune_dataset,
    gold_reply,
    mock_endpoint,
    parse_response,
    predict_with_endpoint,
    render_prediction,
    request_body,
    serialize_patient,
)

from conftest import event, patient

GOLDEN = Path(__file__).parent / "golden"
SYSTEM_PROMPT = (GOLDEN / "system_prompt.txt").read_text(encoding="utf-8")
EXAMPLE_REPLY = (GOLDEN / "example_response.txt").read_text(encoding="utf-8")
KEY_ENV = "EOCRC_TEST_KEY"
SECRET = "sk-test-0123456789abcdef"


# ---- prompt ---------------------------------------------------------------------


def test_default_prompt_matches_golden():
    # [PAPER] the full template, checked in verbatim.
    assert build_prompt("x").system_text == SYSTEM_PROMPT


def test_custom_guidelines_change_only_the_guideline_block():
    custom = GuidelineSpec(high_risk_observations=("Night sweats",))
    text = build_system_text(custom)
    head = SYSTEM_PROMPT[: SYSTEM_PROMPT.index("1. Symptoms and Signs")]
    assert text.startswith(head)
    assert text.endswith(" - * Night sweats")
    assert "Significant weight change" not in text
    assert text[len(head):] == custom.render()


def test_generation_params():
    b = build_prompt("user text")
    assert (b.max_tokens, b.temperature) == (MAX_TOKENS, TEMPERATURE) == (4096, 0.0)
    body = request_body("m", b)
    assert body["max_tokens"] == 4096 and body["temperature"] == 0.0
    assert [m["role"] for m in body["messages"]] == ["system", "user"]
    assert body["messages"][1]["content"] == "user text"


def test_guideline_spec_roundtrip():
    g = GuidelineSpec()
    assert GuidelineSpec.from_dict(json.loads(json.dumps(g.to_dict()))) == g


# ---- serialization ----------------------------------------------------------------


def three_encounter_patient():
    return patient(
        "S1",
        events=(
            event("Condition", "ICD10", "R10.9", "Abdominal pain", 170),
            event("LabResult", "LOINC", "718-7", "Hemoglobin", 180, 11.0, "g/dL"),
            event("Condition", "ICD10", "R10.9", "Abdominal pain", 120),
            event("Observation", "SNOMEDCT", "161832001", "Significant weight change", 100),
            event("Condition", "ICD10", "K59.00", "Constipation", 90),
            event("LabResult", "LOINC", "718-7", "Hemoglobin", 60, 13.0, "g/dL"),
            event("Condition", "ICD10", "R10.9", "Abdominal pain", 45),
            event("Observation", "SNOMEDCT", "161832001", "Significant weight change", 40),
        ),
    )


def serialized(p):
    return serialize_patient([e for e in p.events if 30 <= (p.index_date - e.date).days < 210], p)


def test_serialize_dedup_and_latest_lab():
    text = serialized(three_encounter_patient())
    lines = text.splitlines()
    assert lines[0].startswith("DEMOGRAPHICS: Age 35, Gender Female")
    assert lines[1] == "CONDITIONS: [Abdominal pain, Constipation]"
    assert lines[2] == "LAB RESULTS: [Hemoglobin (13.0 g/dL)]"
    assert lines[3] == "OBSERVATIONS: [Significant weight change]"


def test_serialize_empty_blocks():
    p = patient("E", events=(event("Condition", "ICD10", "R10.9", "Abdominal pain", 50),))
    text = serialized(p)
    assert "LAB RESULTS: []" in text and "OBSERVATIONS: []" in text


def test_serialize_ignores_duplicate_multiplicity():
    base = three_encounter_patient()
    extra = patient("S1", events=tuple(base.events[1:]) + (event("Condition", "ICD10", "R10.9", "Abdominal pain", 100),))
    assert serialized(extra) == serialized(base)


def test_serialized_prompt_carries_no_codes():
    text = serialized(three_encounter_patient())
    assert "R10.9" not in text and "718-7" not in text


# ---- parsing ----------------------------------------------------------------------


def test_parse_example_reply():
    # [PAPER] verbatim model reply.
    p = parse_response(EXAMPLE_REPLY)
    assert p.answer is True and p.probability == 0.75
    assert p.explanation and "Answer:" not in p.explanation


def test_parse_case_insensitive():
    p = parse_response("answer: no\nProbability score: 10%")
    assert p.answer is False and p.probability == pytest.approx(0.10, abs=1e-15)


def test_parse_failure_keeps_raw():
    with pytest.raises(ParseError) as info:
        parse_response("I cannot determine.")
    assert info.value.raw == "I cannot determine."


def test_parse_missing_probability_is_absent():
    assert parse_response("Answer: Yes").probability is None


def test_parse_uses_last_answer():
    text = "Example format: Answer: No\nreasoning...\nAnswer: Yes\nProbability score: 30%"
    p = parse_response(text)
    assert p.answer is True and p.probability == 0.3


gold = st.builds(
    ParsedPrediction,
    answer=st.booleans(),
    probability=st.none() | st.integers(0, 10_000).map(lambda k: k / 10_000),
    explanation=st.sampled_from(["", "Rectal bleeding is an early-stage sign.", "No risk factors present."]),
)


@settings(max_examples=50)
@given(gold)
def test_render_parse_roundtrip(pred):
    back = parse_response(render_prediction(pred))
    assert (back.answer, back.probability) == (pred.answer, pred.probability)
    assert back.explanation == pred.explanation


# ---- endpoints --------------------------------------------------------------------


def ok_payload(text="Answer: Yes\nProbability score: 75%"):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


@pytest.fixture
def keyed(monkeypatch):
    monkeypatch.setenv(KEY_ENV, SECRET)
    return EndpointConfig(base_url="https://llm.test/v1", model="ft:test", api_key_env=KEY_ENV, max_attempts=4)


def test_retry_after_429(keyed, tmp_path):
    statuses = iter([429, 429, 200])
    seen = []

    def handler(request):
        seen.append(request)
        code = next(statuses)
        return httpx.Response(code, json=ok_payload() if code == 200 else {"error": "slow down"})

    sleeps = []
    ep = HttpChatEndpoint(keyed, transport=httpx.MockTransport(handler), sleep=sleeps.append, audit_path=tmp_path / "audit.jsonl")
    assert parse_response(ep.complete(build_prompt("u"))).probability == 0.75
    assert len(seen) == 3 and len(sleeps) == 2
    # exponential backoff with jitter in [0.5, 1.0] of the nominal delay
    assert 0.5 <= sleeps[0] <= 1.0 and 1.0 <= sleeps[1] <= 2.0
    assert seen[0].url.path == "/v1/chat/completions"
    assert seen[0].headers["Authorization"] == f"Bearer {SECRET}"
    body = json.loads(seen[0].content)
    assert body["model"] == "ft:test" and body["max_tokens"] == 4096
    audit = (tmp_path / "audit.jsonl").read_text()
    assert len(audit.splitlines()) == 3 and SECRET not in audit
    ep.close()


def test_secret_echoed_by_server_is_redacted(keyed, tmp_path):
    def handler(request):
        return httpx.Response(200, json=ok_payload(f"Answer: No\nkey was {request.headers['Authorization']}"))

    ep = HttpChatEndpoint(keyed, transport=httpx.MockTransport(handler), audit_path=tmp_path / "a.jsonl")
    ep.complete(build_prompt("u"))
    assert SECRET not in (tmp_path / "a.jsonl").read_text()
    assert "[REDACTED]" in (tmp_path / "a.jsonl").read_text()


def test_non_retryable_status_fails_fast(keyed):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, json={"error": "bad key"})

    ep = HttpChatEndpoint(keyed, transport=httpx.MockTransport(handler), sleep=lambda s: None)
    with pytest.raises(TransportError):
        ep.complete(build_prompt("u"))
    assert len(calls) == 1


def test_exhausted_retries(keyed):
    def handler(request):
        raise httpx.ConnectError("down", request=request)

    sleeps = []
    ep = HttpChatEndpoint(keyed, transport=httpx.MockTransport(handler), sleep=sleeps.append)
    with pytest.raises(TransportError, match="4 attempts"):
        ep.complete(build_prompt("u"))
    assert len(sleeps) == 3


def test_jitter_is_seeded(keyed):
    def run():
        sleeps = []
        codes = iter([503, 503, 503, 200])
        ep = HttpChatEndpoint(
            keyed,
            transport=httpx.MockTransport(lambda r: httpx.Response(next(codes), json=ok_payload())),
            sleep=sleeps.append,
        )
        ep.complete(build_prompt("u"))
        return sleeps

    assert run() == run()


def test_endpoint_config_validation_and_no_secret(keyed):
    with pytest.raises(ConfigError) as info:
        EndpointConfig(max_concurrency=0)
    assert info.value.field == "llm.endpoint.max_concurrency"
    d = keyed.to_dict()
    assert SECRET not in json.dumps(d) and d["api_key_env"] == KEY_ENV
    assert EndpointConfig.from_dict(d) == keyed
    with pytest.raises(ConfigError):
        EndpointConfig.from_dict({"api_key": SECRET})


def test_mock_endpoint_example_reply():
    ep = mock_endpoint({"Rectal hemorrhage": EXAMPLE_REPLY})
    p = predict_with_endpoint(ep, build_prompt("CONDITIONS: [Rectal hemorrhage]"))
    assert (p.answer, p.probability) == (True, 0.75)


def test_empty_rulebook_answers_no():
    ep = mock_endpoint()
    preds = [predict_with_endpoint(ep, build_prompt(f"patient {i}")) for i in range(5)]
    assert all((p.answer, p.probability) == (False, None) for p in preds)


def test_concurrency_cap():
    ep = mock_endpoint({"odd": "Answer: Yes"}, latency=0.005)
    predictor = LLMPredictor(ep, max_concurrency=4)
    labels = predictor([build_prompt("odd" if i % 2 else "even") for i in range(100)])
    assert ep.calls == 100 and 1 <= ep.max_in_flight <= 4
    assert labels.tolist() == [i % 2 for i in range(100)]


def test_predictor_counts_parse_failures_as_negative():
    predictor = LLMPredictor(mock_endpoint(default_reply="no idea"), max_concurrency=2)
    assert predictor([build_prompt("a"), build_prompt("b")]).tolist() == [0, 0]
    assert all(h.parsed is None and h.raw == "no idea" for h in predictor.history)
    with pytest.raises(ConfigError):
        LLMPredictor(mock_endpoint(), max_concurrency=0)


# ---- fine-tune export -------------------------------------------------------------


def windowed_set():
    crc = patient("B2", events=(event("Condition", "ICD10", "K62.5", "Rectal hemorrhage", 60),))
    non = patient("A1", label=Label.NON_CRC)
    return [Windowed(crc, crc.events[1:]), Windowed(non, ())]


def test_finetune_export(tmp_path):
    n = export_finetune_dataset(windowed_set(), GuidelineSpec(), tmp_path / "ft.jsonl")
    lines = (tmp_path / "ft.jsonl").read_text(encoding="utf-8").splitlines()
    assert n == len(lines) == 2
    recs = [json.loads(l)["messages"] for l in lines]
    assert [[m["role"] for m in r] for r in recs] == [["system", "user", "assistant"]] * 2
    # sorted by patient id: A1 (non-CRC) first
    assert recs[0][2]["content"].startswith("Answer: No")
    assert recs[1][2]["content"].startswith("Answer: Yes")
    assert "Rectal hemorrhage" in recs[1][1]["content"]
    assert recs[0][0]["content"] == SYSTEM_PROMPT
    first = (tmp_path / "ft.jsonl").read_bytes()
    export_finetune_dataset(list(reversed(windowed_set())), GuidelineSpec(), tmp_path / "ft.jsonl")
    assert (tmp_path / "ft.jsonl").read_bytes() == first


def test_gold_reply_parses_back():
    assert (parse_response(gold_reply(True)).answer, parse_response(gold_reply(True)).probability) == (True, 1.0)
    assert parse_response(gold_reply(False)).probability == 0.0
