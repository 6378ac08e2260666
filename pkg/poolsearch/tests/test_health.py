# poolsearch/tests/test_health.py
from fastapi.testclient import TestClient

from poolsearch.main import app


def test_health_endpoint():
    client = TestClient(app)
    r = client.get("/health")
    assert r.status_code == 200
    data = r.json()
    assert data.get("status") == "ok"
    assert "version" in data


def test_mock_generator_answers_at_third_step():
    client = TestClient(app)
    body = {"messages": [{"role": "user", "content": "q"}], "n": 2, "stop": ["\n\n"]}
    first = client.post("/v1/chat/completions", json=body).json()
    assert len(first["choices"]) == 2
    assert first["choices"][0]["stop_reason"] == "\n\n"

    body["messages"].append({"role": "assistant", "content": "Step 1.0: a\n\nStep 2.0: b\n\n"})
    third = client.post("/v1/chat/completions", json=body).json()
    assert "\\boxed{42}" in third["choices"][0]["message"]["content"]
    assert third["choices"][0]["stop_reason"] is None


def test_mock_scorer():
    client = TestClient(app)
    r = client.post("/v1/score", json={"steps": ["plain", "score=0.25", "\\boxed{1}"]})
    assert r.json()["step_scores"] == [0.5, 0.25, 0.95]


def test_metrics_endpoint_counts_requests():
    client = TestClient(app)
    client.post("/v1/score", json={"steps": ["x"]})
    text = client.get("/metrics").text
    assert "mock_requests_total" in text
