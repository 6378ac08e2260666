# poolsearch/tests/test_http_backend.py
import json

import httpx
import pytest
from fastapi.testclient import TestClient

from poolsearch.backends.http import HttpBackend
from poolsearch.engine import run_search
from poolsearch.errors import BackendTimeout, MalformedResponse, ServiceError
from poolsearch.main import app
from poolsearch.models import HttpBackendConfig, Method, MethodSpec, SearchConfig

GEN = "http://gen.local/v1/chat/completions"
PRM = "http://prm.local/v1/score"


def _cfg(**kw):
    base = dict(generator_url=GEN, generator_model="m", scorer_url=PRM, scorer_model="prm",
                backoff_s=0.0, max_concurrent=1)
    base.update(kw)
    return HttpBackendConfig(**base)


def _completion(*choices):
    return {"choices": [
        {"index": i, "message": {"role": "assistant", "content": c["content"]},
         "finish_reason": c.get("finish", "stop"), "stop_reason": c.get("stop_reason"),
         **({"logprobs": c["logprobs"]} if "logprobs" in c else {})}
        for i, c in enumerate(choices)
    ]}


def _backend(handler, **kw):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpBackend(_cfg(**kw), "What is 6 * 7?", reference_answer="42", client=client)


def test_step_ending_at_delimiter():
    def handler(request):
        return httpx.Response(200, json=_completion({"content": "Multiply.", "stop_reason": "\n\n"}))

    kids = _backend(handler).http_expand(None, [], 1, 0.7)
    assert len(kids) == 1
    assert kids[0].step == "Multiply." and not kids[0].terminal and kids[0].depth == 1


def test_answer_marker_makes_terminal():
    def handler(request):
        return httpx.Response(200, json=_completion({"content": "So \\boxed{42}."}))

    kid = _backend(handler).http_expand(None, [], 1, 0.7)[0]
    assert kid.terminal and kid.answer == "42"


def test_end_of_sequence_without_marker_is_terminal():
    def handler(request):
        return httpx.Response(200, json=_completion({"content": "it is 42"}))

    kid = _backend(handler).http_expand(None, ["first step"], 1, 0.7)[0]
    assert kid.terminal and kid.answer == "it is 42" and kid.depth == 1


def test_truncated_step_is_not_terminal():
    def handler(request):
        return httpx.Response(200, json=_completion({"content": "still going", "finish": "length"}))

    assert not _backend(handler).http_expand(None, [], 1, 0.7)[0].terminal


def test_text_after_delimiter_is_dropped():
    def handler(request):
        return httpx.Response(200, json=_completion({"content": "one\n\ntwo"}))

    kid = _backend(handler).http_expand(None, [], 1, 0.7)[0]
    assert kid.step == "one" and not kid.terminal


def test_step_logprob_sums_covering_tokens():
    lp = {"content": [{"token": "ab", "logprob": -0.5}, {"token": "c", "logprob": -0.25},
                      {"token": "\n\n", "logprob": -1.0}]}

    def handler(request):
        return httpx.Response(200, json=_completion({"content": "abc", "stop_reason": "\n\n", "logprobs": lp}))

    kid = _backend(handler).http_expand(None, [], 1, 0.7)[0]
    assert kid.step_logprob == pytest.approx(-0.75)
    assert kid.tokens == 2


def test_request_payload_continues_the_prefix():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        seen["auth"] = request.headers.get("Authorization")
        return httpx.Response(200, json=_completion({"content": "x", "stop_reason": "\n\n"},
                                                    {"content": "y", "stop_reason": "\n\n"}))

    kids = _backend(handler, auth_token="secret-1").http_expand(None, ["a", "b"], 2, 0.3)
    assert len(kids) == 2
    assert seen["n"] == 2 and seen["temperature"] == 0.3
    assert seen["messages"][-1] == {"role": "assistant", "content": "a\n\nb\n\n"}
    assert seen["continue_final_message"] is True
    assert seen["stop"] == ["\n\n"]
    assert seen["auth"] == "Bearer secret-1"


def test_retries_then_succeeds():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] <= 2:
            return httpx.Response(500, json={"error": "boom"})
        return httpx.Response(200, json=_completion({"content": "ok", "stop_reason": "\n\n"}))

    backend = _backend(handler)
    assert backend.http_expand(None, [], 1, 0.7)[0].step == "ok"
    assert backend.retries == 2


def test_client_error_is_not_retried():
    def handler(request):
        return httpx.Response(400, json={"error": "bad"})

    backend = _backend(handler)
    with pytest.raises(ServiceError) as exc:
        backend.http_expand(None, [], 1, 0.7)
    assert exc.value.status == 400
    assert backend.retries == 0


def test_timeout_surfaces_after_retries():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    backend = _backend(handler, max_retries=1)
    with pytest.raises(BackendTimeout):
        backend.http_expand(None, [], 1, 0.7)
    assert backend.retries == 1


def test_too_few_choices_is_malformed():
    def handler(request):
        return httpx.Response(200, json=_completion({"content": "x"}))

    with pytest.raises(MalformedResponse):
        _backend(handler, max_retries=1).http_expand(None, [], 3, 0.7)


@pytest.mark.parametrize("scores,expected", [([0.9, 0.7, 0.4], 0.4), ([1.0], 1.0), ([0.0], 1e-4)])
def test_last_step_score_is_used(scores, expected):
    def handler(request):
        body = json.loads(request.content)
        assert body["steps"] == ["s1", "s2"]
        return httpx.Response(200, json={"step_scores": scores})

    assert _backend(handler).http_score(["s1", "s2"]) == pytest.approx(expected)


def test_empty_scores_are_malformed():
    def handler(request):
        return httpx.Response(200, json={"step_scores": []})

    with pytest.raises(MalformedResponse):
        _backend(handler, max_retries=1).http_score(["s"])


def test_answer_check_normalizes_whitespace():
    backend = _backend(lambda r: httpx.Response(200, json={}))
    assert backend.check_answer(" 4 2 ")
    assert not backend.check_answer("41")
    assert HttpBackend(_cfg(), "p", client=httpx.Client()).check_answer("42") is None


# ------------------------------- against the mock service ----------------------
def _mock_backend(client):
    cfg = _cfg(generator_url="http://testserver/v1/chat/completions",
               scorer_url="http://testserver/v1/score")
    return HttpBackend(cfg, "What is 6 * 7?", reference_answer="42", client=client)


def test_search_end_to_end_against_mock_service():
    client = TestClient(app)
    cfg = SearchConfig(child_budget=4, parent_budget=2, horizon=5, spec=MethodSpec(method=Method.BEAM))
    res = run_search(cfg, _mock_backend(client), "mock-1")
    assert not res.failed
    assert res.final.answer == "42"
    assert res.correct
    assert res.rounds_run == 2


def test_injected_faults_are_retried():
    client = TestClient(app)
    r = client.post("/mock/faults", json={"status": 503, "count": 2})
    assert r.status_code == 200
    backend = _mock_backend(client)
    kids = backend.http_expand(None, [], 2, 0.7)
    assert len(kids) == 2
    assert backend.retries == 2
