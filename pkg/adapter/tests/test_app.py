from __future__ import annotations

import numpy as np
import pytest
from fastapi.testclient import TestClient

from model_adapter import AdapterConfig, ModelFailure, create_app


def test_health(client):
    response = client.get("/v1/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_embed_shape_and_dim(client):
    payload = client.post(
        "/v1/embed", json={"texts": ["one", "two", "three"]}
    ).json()
    assert payload["dim"] == 8
    assert len(payload["embeddings"]) == 3
    assert all(len(row) == payload["dim"] for row in payload["embeddings"])
    assert all(np.isfinite(row).all() for row in payload["embeddings"])


def test_embed_dim_is_constant(client):
    a = client.post("/v1/embed", json={"texts": ["x"]}).json()["dim"]
    b = client.post("/v1/embed", json={"texts": ["y", "z"]}).json()["dim"]
    assert a == b == 8


def test_embed_order_follows_input(client):
    fwd = client.post("/v1/embed", json={"texts": ["alpha", "beta"]}).json()
    rev = client.post("/v1/embed", json={"texts": ["beta", "alpha"]}).json()
    assert fwd["embeddings"][0] == rev["embeddings"][1]
    assert fwd["embeddings"][1] == rev["embeddings"][0]


def test_batch_split_is_invisible():
    texts = [f"utterance {i}" for i in range(5)]
    small = TestClient(create_app(AdapterConfig(embed_model="stub-8", max_batch=2)))
    large = TestClient(create_app(AdapterConfig(embed_model="stub-8", max_batch=100)))
    a = small.post("/v1/embed", json={"texts": texts}).json()
    b = large.post("/v1/embed", json={"texts": texts}).json()
    assert a == b


@pytest.mark.parametrize(
    "body",
    [
        {},
        {"texts": []},
        {"texts": "not a list"},
        {"texts": ["fine", 3]},
        [1, 2],
    ],
)
def test_embed_rejects_bad_bodies(client, body):
    response = client.post("/v1/embed", json=body)
    assert response.status_code == 400
    assert response.json()["error"]["code"] == "bad_request"


def test_embed_rejects_invalid_json(client):
    response = client.post(
        "/v1/embed", content=b"{oops", headers={"Content-Type": "application/json"}
    )
    assert response.status_code == 400


def test_generate_applies_defaults(client):
    response = client.post("/v1/generate", json={"prompt": "hello"})
    assert response.status_code == 200
    assert response.json()["text"]


def test_generate_token_budget(client):
    text = client.post(
        "/v1/generate", json={"prompt": "count", "max_tokens": 3}
    ).json()["text"]
    assert len(text.split()) <= 3
    long = client.post(
        "/v1/generate", json={"prompt": "count", "max_tokens": 500}
    ).json()["text"]
    assert len(long.split()) <= 8  # stub caps its own output


@pytest.mark.parametrize(
    "body",
    [
        {},
        {"prompt": ""},
        {"prompt": 4},
        {"prompt": "ok", "max_tokens": 0},
        {"prompt": "ok", "max_tokens": "many"},
        {"prompt": "ok", "max_tokens": True},
        {"prompt": "ok", "temperature": "hot"},
        {"prompt": "ok", "temperature": False},
    ],
)
def test_generate_rejects_bad_bodies(client, body):
    response = client.post("/v1/generate", json=body)
    assert response.status_code == 400
    assert response.json()["error"]["code"] == "bad_request"


class _Broken:
    dim = 8

    def encode(self, texts):
        raise ModelFailure("checkpoint corrupted")

    def generate(self, prompt, max_tokens, temperature):
        raise ModelFailure("checkpoint corrupted")


def test_model_failure_maps_to_500():
    app = create_app(AdapterConfig(embed_model="stub-8"))
    client = TestClient(app)
    app.state.encoder = _Broken()
    app.state.generator = _Broken()
    embed = client.post("/v1/embed", json={"texts": ["x"]})
    assert embed.status_code == 500
    assert embed.json()["error"]["code"] == "model_failure"
    generate = client.post("/v1/generate", json={"prompt": "x"})
    assert generate.status_code == 500
    assert generate.json()["error"]["code"] == "model_failure"
