import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fixtures import KINDS, T0, assert_records_close, payload_pair, thirty_datasets
from sensorstd.exceptions import BackendUnavailable
from sensorstd.schema import RawPayload, dumps_doc
from sensorstd.standardizer import (
    SYSTEM_PROMPT,
    BackendConfig,
    BackendKind,
    MockBackend,
    MockMapping,
    RemoteLLMBackend,
    Standardizer,
    StandardizationOutcome,
    build_repair_prompt,
    make_backend,
    parse_candidate,
    standardize,
)
from sensorstd.validation import ErrorCode, ValidationError, ValidationReport, validate_dataset

ACC_BODY = {"acc": {"ts": 1705307400, "ax": 0.1, "ay": 0.2, "az": 9.8}}
ACC_MAPPING = MockMapping.from_document({"entries": [
    {"path": "$.acc.ts", "kind": "Accelerometer", "field": "time"},
    {"path": "$.acc.ax", "kind": "Accelerometer", "field": "x"},
    {"path": "$.acc.ay", "kind": "Accelerometer", "field": "y"},
    {"path": "$.acc.az", "kind": "Accelerometer", "field": "z"},
]})
ACC_EXPECTED = {"name": "Accelerometer", "time": 1705307400000000000, "values": {"x": 0.1, "y": 0.2, "z": 9.8}}


def _raw(body, source="test"):
    return RawPayload(source, T0, body)


def test_expected_record_is_valid():
    assert validate_dataset([ACC_EXPECTED]).valid


def test_mock_accelerometer_example():
    out = standardize(MockBackend(ACC_MAPPING), _raw(ACC_BODY))
    assert out.converged and out.iterations_used == 1
    assert list(out.dataset) == [ACC_EXPECTED]


def test_missing_time_repaired_on_second_iteration():
    backend = MockBackend(ACC_MAPPING, faulty_iterations=1)
    out = standardize(backend, _raw(ACC_BODY))
    assert out.converged and out.iterations_used == 2
    assert backend.calls[0][1] is None
    assert "/records/0/time" in backend.calls[1][1]


def test_always_faulty_hits_the_cap():
    backend = MockBackend(ACC_MAPPING, faulty_iterations=10**6)
    out = standardize(backend, _raw(ACC_BODY))
    assert not out.converged and out.iterations_used == 5 and len(backend.calls) == 5
    assert [e.code for e in out.final_report.errors] == [ErrorCode.MISSING_FIELD]


def test_garbage_response_consumes_an_iteration():
    backend = MockBackend(ACC_MAPPING, garbage_iterations=2)
    out = standardize(backend, _raw(ACC_BODY))
    assert out.converged and out.iterations_used == 3
    assert "Unparseable" in backend.calls[1][1] and "{not json" in backend.calls[1][1]


def test_absent_source_value_becomes_null_and_fails():
    body = {"acc": {"ts": 1705307400, "ax": 0.1, "ay": 0.2}}
    out = standardize(MockBackend(ACC_MAPPING), _raw(body), max_iterations=2)
    assert not out.converged
    assert out.dataset[0]["values"]["z"] is None
    assert [(e.path, e.code) for e in out.final_report.errors] == [("/records/0/values/z", ErrorCode.MISSING_FIELD)]


@pytest.mark.parametrize("cap", [0, 21])
def test_cap_bounds(cap):
    with pytest.raises(ValueError):
        standardize(MockBackend(ACC_MAPPING), _raw(ACC_BODY), max_iterations=cap)
    with pytest.raises(ValueError):
        BackendConfig(max_iterations=cap)


def test_config_invariants():
    with pytest.raises(ValueError):
        BackendConfig(kind="RemoteLLM", endpoint="https://x")
    cfg = BackendConfig(kind="RemoteLLM", endpoint="https://x", model_name="m")
    assert cfg.kind is BackendKind.REMOTE_LLM and cfg.max_iterations == 5 and cfg.timeout == 60.0
    with pytest.raises(ValueError):
        make_backend(BackendConfig())


def test_outcome_invariant():
    with pytest.raises(ValueError):
        StandardizationOutcome((), 1, True, ValidationReport.from_errors(
            [ValidationError("/x", ErrorCode.WRONG_TYPE, "")]))


def test_parse_candidate_shapes():
    assert parse_candidate('```json\n[{"a":1}]\n```') == [{"a": 1}]
    assert parse_candidate('{"records": [1]}') == [1]
    assert parse_candidate('{"a": 1}') == [{"a": 1}]
    with pytest.raises(ValueError):
        parse_candidate("3")


# repair prompt


def _report(*paths):
    return ValidationReport.from_errors([ValidationError(p, ErrorCode.MISSING_FIELD, f"{p} missing") for p in paths])


def test_repair_prompt_contains_path():
    assert "/time" in build_repair_prompt({"name": "UWB"}, _report("/time"))


def test_repair_prompt_guard():
    with pytest.raises(ValueError):
        build_repair_prompt([], ValidationReport.from_errors([]))


def test_repair_prompt_two_errors_once_each():
    cand = [{"name": "Accelerometer", "values": {"x": 1}}]
    text = build_repair_prompt(cand, _report("/records/0/values/y", "/records/0/values/z"))
    lines = [ln for ln in text.splitlines() if ln.startswith("- at ")]
    assert [ln.split()[2] for ln in lines] == ["/records/0/values/y:", "/records/0/values/z:"]


def test_repair_prompt_schema_excerpt_for_failing_kind():
    cand = [{"name": "Accelerometer", "values": {"x": 1}}]
    text = build_repair_prompt(cand, _report("/records/0/values/y"))
    assert '"Accelerometer"' in text and '"Barometer"' not in text
    assert text == build_repair_prompt(cand, _report("/records/0/values/y"))


# determinism and independent validation


@given(seed=st.integers(0, 10**6), kinds=st.lists(st.sampled_from(KINDS), min_size=1, max_size=4, unique=True))
def test_mock_is_deterministic_and_matches_oracle(seed, kinds):
    body, mapping, expected = payload_pair(kinds, seed)
    mapping = MockMapping.from_document(mapping)
    a = standardize(MockBackend(mapping), _raw(body))
    b = standardize(MockBackend(mapping), _raw(json.loads(json.dumps(body))))
    assert dumps_doc(list(a.dataset)) == dumps_doc(list(b.dataset))
    assert a.converged and a.iterations_used == 1
    assert validate_dataset(list(a.dataset)).valid
    assert_records_close(list(a.dataset), expected)


def test_thirty_dataset_distribution():
    counts = {"first": 0, "repaired": 0, "failed": 0}
    for body, mapping, faulty in thirty_datasets():
        backend = MockBackend(MockMapping.from_document(mapping), faulty_iterations=faulty)
        out = standardize(backend, _raw(body))
        assert len(backend.calls) == out.iterations_used <= 5
        if not out.converged:
            counts["failed"] += 1
        elif out.iterations_used == 1:
            counts["first"] += 1
        else:
            assert out.iterations_used <= 4
            counts["repaired"] += 1
    assert counts == {"first": 24, "repaired": 2, "failed": 4}


def test_standardizer_estimator():
    est = Standardizer(MockBackend(ACC_MAPPING)).fit()
    out = est.transform([_raw(ACC_BODY), _raw({"acc": {"ts": 1}})])
    assert out[0] == [ACC_EXPECTED] and out[1] == []
    assert [o.converged for o in est.outcomes_] == [True, False]
    assert est.get_params()["max_iterations"] == 5
    with pytest.raises(ValueError):
        Standardizer().fit()


# remote backend over a mock transport

REMOTE = BackendConfig(kind="RemoteLLM", endpoint="https://llm.invalid/v1/chat/completions", model_name="m",
                       auth_token_env="SENSORSTD_TEST_TOKEN")


def _remote(handler, **kw):
    sleeps = []
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return RemoteLLMBackend(REMOTE, client=client, sleep=sleeps.append, **kw), sleeps


def _completion(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def test_remote_request_shape(monkeypatch):
    monkeypatch.setenv("SENSORSTD_TEST_TOKEN", "secret")
    seen = []

    def handler(request):
        seen.append(request)
        return _completion(dumps_doc([ACC_EXPECTED]))

    backend, sleeps = _remote(handler)
    out = standardize(backend, _raw(ACC_BODY))
    assert out.converged and sleeps == []
    body = json.loads(seen[0].content)
    assert seen[0].headers["authorization"] == "Bearer secret"
    assert body["model"] == "m" and body["temperature"] == 0
    assert body["messages"][0]["role"] == "system" and body["messages"][0]["content"].startswith(SYSTEM_PROMPT)
    assert "Segment acc" in body["messages"][1]["content"]


def test_remote_retries_with_backoff_then_succeeds():
    responses = [httpx.Response(503), httpx.Response(429), _completion(dumps_doc([ACC_EXPECTED]))]
    backend, sleeps = _remote(lambda r: responses.pop(0))
    assert standardize(backend, _raw(ACC_BODY)).converged
    assert sleeps == [0.5, 1.0]


def test_remote_transport_failure_is_backend_unavailable():
    def handler(request):
        raise httpx.ConnectError("refused")

    backend, sleeps = _remote(handler)
    with pytest.raises(BackendUnavailable):
        standardize(backend, _raw(ACC_BODY))
    assert sleeps == [0.5, 1.0]


def test_remote_client_error_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401)

    backend, _ = _remote(handler)
    with pytest.raises(BackendUnavailable):
        standardize(backend, _raw(ACC_BODY))
    assert len(calls) == 1


def test_remote_malformed_completion_costs_one_iteration():
    responses = [httpx.Response(200, text="oops"), _completion(dumps_doc([ACC_EXPECTED]))]
    backend, _ = _remote(lambda r: responses.pop(0))
    out = standardize(backend, _raw(ACC_BODY))
    assert out.converged and out.iterations_used == 2
