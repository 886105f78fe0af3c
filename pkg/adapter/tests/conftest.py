from __future__ import annotations

from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from model_adapter import AdapterConfig, create_app

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def config():
    return AdapterConfig(embed_model="stub-8")


@pytest.fixture(scope="session")
def client(config):
    return TestClient(create_app(config))


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES
