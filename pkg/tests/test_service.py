from __future__ import annotations

import threading
import time

import pytest
from fastapi.testclient import TestClient

from intentgate import service
from intentgate.backends import MockEmbedBackend, MockGenerateBackend
from intentgate.errors import BackendError
from intentgate.pipeline import Pipeline, PipelineConfig


class ToggleGenerator:
    """Generation backend whose health can be flipped from the test."""

    def __init__(self, oracle=None):
        self.inner = MockGenerateBackend(oracle=oracle)
        self.healthy = True
        self.fail_generate = False

    def generate(self, prompt, max_tokens, temperature):
        if self.fail_generate:
            raise BackendError("generator offline", code="backend_unreachable")
        return self.inner.generate(prompt, max_tokens, temperature)

    def health(self):
        return self.healthy


def _pipeline(world, model, dictionary, generator, **cfg):
    config = PipelineConfig(**cfg)
    return Pipeline(
        config,
        world.catalog,
        model,
        dictionary,
        MockEmbedBackend(dim=world.dim, table=world.embed_table()),
        generator,
    )


@pytest.fixture()
def generator(world):
    return ToggleGenerator(oracle=world.oracle())


@pytest.fixture()
def client(world, model, dictionary, generator):
    pipeline = _pipeline(world, model, dictionary, generator, strategy="moderate")
    return TestClient(service.create_app(pipeline))


def test_health_reports_ready(client):
    response = client.get("/v1/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok", "ready": True}


def test_classify_text_roundtrip(client, world):
    utt, gold = world.ins_test.items[0]
    response = client.post("/v1/classify", json={"text": utt.text})
    assert response.status_code == 200
    payload = response.json()
    assert payload["intent"] == gold
    assert payload["source"] == "classifier"
    assert payload["strategy"] == "moderate"
    assert len(payload["request_id"]) == 32  # generated uuid hex


def test_classify_echoes_request_id(client, world):
    utt, _ = world.ins_test.items[1]
    response = client.post(
        "/v1/classify", json={"text": utt.text, "request_id": "req-42"}
    )
    assert response.status_code == 200
    assert response.json()["request_id"] == "req-42"


def test_classify_escalates_oos(client, world):
    utt, _ = world.oos_test.items[0]
    response = client.post("/v1/classify", json={"text": utt.text})
    payload = response.json()
    assert payload["oos"] is True
    assert payload["source"] == "llm"
    assert payload["escalated"] is True


def test_classify_embedding_bypass(client, world):
    utt, _ = world.oos_test.items[0]
    response = client.post(
        "/v1/classify", json={"embedding": utt.embedding.tolist()}
    )
    assert response.status_code == 200
    payload = response.json()
    # no text to prompt with, so the high score cannot trigger escalation
    assert payload["source"] == "classifier"
    assert payload["escalated"] is False
    assert payload["timings_ms"]["embed"] == 0.0


def test_classify_embedding_with_text_can_escalate(client, world):
    utt, _ = world.oos_test.items[0]
    response = client.post(
        "/v1/classify", json={"embedding": utt.embedding.tolist(), "text": utt.text}
    )
    payload = response.json()
    assert payload["oos"] is True
    assert payload["timings_ms"]["embed"] == 0.0


@pytest.mark.parametrize(
    "body",
    [
        {},
        {"text": ""},
        {"text": "   "},
        {"text": 7},
        {"text": "hi", "request_id": 9},
        {"embedding": ["a", "b"]},
    ],
)
def test_classify_rejects_bad_bodies(client, body):
    response = client.post("/v1/classify", json=body)
    assert response.status_code == 400
    error = response.json()["error"]
    assert error["code"] == "bad_request"
    assert error["message"]


def test_classify_rejects_invalid_json(client):
    response = client.post(
        "/v1/classify",
        content=b"{not json",
        headers={"Content-Type": "application/json"},
    )
    assert response.status_code == 400
    assert response.json()["error"]["code"] == "bad_request"


def test_classify_rejects_non_object_body(client):
    response = client.post("/v1/classify", json=[1, 2, 3])
    assert response.status_code == 400


def test_classify_rejects_wrong_dim_embedding(client):
    response = client.post("/v1/classify", json={"embedding": [1.0, 0.0]})
    assert response.status_code == 400


def test_classify_rejects_zero_embedding(client, world):
    response = client.post("/v1/classify", json={"embedding": [0.0] * world.dim})
    assert response.status_code == 400


def test_not_ready_gives_503(world, model, dictionary, generator):
    generator.healthy = False
    pipeline = _pipeline(world, model, dictionary, generator)
    client = TestClient(service.create_app(pipeline))
    assert client.get("/v1/health").json()["ready"] is False
    response = client.post("/v1/classify", json={"text": "hello"})
    assert response.status_code == 503
    assert response.json()["error"]["code"] == "not_ready"


def test_readiness_is_sticky(world, model, dictionary, generator):
    generator.healthy = False
    pipeline = _pipeline(world, model, dictionary, generator)
    client = TestClient(service.create_app(pipeline))
    assert client.get("/v1/health").json()["ready"] is False
    generator.healthy = True
    assert client.get("/v1/health").json()["ready"] is True
    generator.healthy = False  # later probe failures do not unready the app
    assert client.get("/v1/health").json()["ready"] is True


def test_backend_failure_fail_policy_gives_502(world, model, dictionary, generator):
    pipeline = _pipeline(
        world, model, dictionary, generator,
        strategy="full", on_backend_error="fail",
    )
    client = TestClient(service.create_app(pipeline))
    generator.fail_generate = True
    utt, _ = world.ins_test.items[0]
    response = client.post("/v1/classify", json={"text": utt.text})
    assert response.status_code == 502
    assert response.json()["error"]["code"] == "backend_unreachable"


def test_backend_failure_degrade_policy_gives_200(world, model, dictionary, generator):
    pipeline = _pipeline(world, model, dictionary, generator, strategy="full")
    app = service.create_app(pipeline)
    client = TestClient(app)
    generator.fail_generate = True
    utt, _ = world.ins_test.items[0]
    response = client.post("/v1/classify", json={"text": utt.text})
    assert response.status_code == 200
    payload = response.json()
    assert payload["degraded"] is True
    assert payload["source"] == "classifier"
    assert app.state.metrics.degraded_total == 1


def test_metrics_count_requests(client, world):
    app = client.app
    ins, _ = world.ins_test.items[0]
    oos, _ = world.oos_test.items[0]
    client.post("/v1/classify", json={"text": ins.text})
    client.post("/v1/classify", json={"text": oos.text})
    client.post("/v1/classify", json={"text": ""})  # rejected, not counted
    assert app.state.metrics.requests_total == 2
    assert app.state.metrics.escalated_total == 1
    assert app.state.metrics.degraded_total == 0


def test_bounded_generator_caps_inflight():
    class SlowGenerator:
        def __init__(self):
            self.lock = threading.Lock()
            self.inflight = 0
            self.peak = 0

        def generate(self, prompt, max_tokens, temperature):
            with self.lock:
                self.inflight += 1
                self.peak = max(self.peak, self.inflight)
            time.sleep(0.02)
            with self.lock:
                self.inflight -= 1
            return "ok"

        def health(self):
            return True

    slow = SlowGenerator()
    bounded = service._BoundedGenerator(slow, cap=3)
    threads = [
        threading.Thread(target=bounded.generate, args=("p", 4, 0.0))
        for _ in range(12)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert slow.peak <= 3
    assert bounded.health()
