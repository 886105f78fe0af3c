"""Replays the recorded wire exchanges and checks the determinism pledge."""

from __future__ import annotations

import json

from fastapi.testclient import TestClient

from model_adapter import AdapterConfig, create_app


def assert_same_structure(recorded, live, path="$"):
    """Field names, container shapes, and scalar types must line up."""
    if isinstance(recorded, dict):
        assert isinstance(live, dict), f"{path}: expected object, got {type(live).__name__}"
        assert set(recorded) == set(live), (
            f"{path}: keys {sorted(recorded)} != {sorted(live)}"
        )
        for key in recorded:
            assert_same_structure(recorded[key], live[key], f"{path}.{key}")
    elif isinstance(recorded, list):
        assert isinstance(live, list), f"{path}: expected array, got {type(live).__name__}"
        assert len(recorded) == len(live), (
            f"{path}: length {len(recorded)} != {len(live)}"
        )
        for i, (a, b) in enumerate(zip(recorded, live)):
            assert_same_structure(a, b, f"{path}[{i}]")
    elif isinstance(recorded, bool) or recorded is None:
        assert type(recorded) is type(live), f"{path}: {recorded!r} vs {live!r}"
    elif isinstance(recorded, (int, float)):
        assert isinstance(live, (int, float)) and not isinstance(live, bool), (
            f"{path}: expected number, got {live!r}"
        )
    else:
        assert isinstance(live, str), f"{path}: expected string, got {type(live).__name__}"


def test_c12_golden_fixtures_replay(client, fixtures_dir):
    fixture_paths = sorted(fixtures_dir.glob("*.json"))
    assert fixture_paths, "no recorded fixtures found"
    for path in fixture_paths:
        record = json.loads(path.read_text(encoding="utf-8"))
        request = record["request"]
        live = client.request(request["method"], request["path"], json=request["body"])
        assert live.status_code == record["status"], path.name
        payload = live.json()
        assert_same_structure(record["response"], payload, f"$({path.name})")
        if "error" in record["response"]:
            # the error contract pins the code strings, not just the shape
            assert payload["error"]["code"] == record["response"]["error"]["code"]


def test_c12_temperature_zero_is_deterministic(client):
    body = {"prompt": "Choose the closest intent.", "max_tokens": 16, "temperature": 0.0}
    first = client.post("/v1/generate", json=body).json()["text"]
    second = client.post("/v1/generate", json=body).json()["text"]
    assert first == second

    embed_body = {"texts": ["same sentence", "same sentence"]}
    rows = client.post("/v1/embed", json=embed_body).json()["embeddings"]
    assert rows[0] == rows[1]
    again = client.post("/v1/embed", json=embed_body).json()["embeddings"]
    assert again == rows

    # a fresh process-equivalent instance reproduces the exact outputs
    other = TestClient(create_app(AdapterConfig(embed_model="stub-8")))
    assert other.post("/v1/generate", json=body).json()["text"] == first
    assert other.post("/v1/embed", json=embed_body).json()["embeddings"] == rows
