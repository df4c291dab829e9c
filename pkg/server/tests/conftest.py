"""Shared fixtures: in-process test clients and the wire schema validator.

The JSON schemas under fixtures/wire/ at the repository root are the single
source of truth for the protocol; the decoder package's remote-provider tests
validate against the same files.
"""

import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient
from jsonschema import Draft202012Validator

from mozo_server.app import ServerConfig, create_app

SCHEMA_DIR = Path(__file__).resolve().parents[2] / "fixtures" / "wire"


def wire_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())


def assert_valid(payload: dict, schema_name: str) -> None:
    Draft202012Validator(wire_schema(schema_name)).validate(payload)


@pytest.fixture(scope="module")
def client():
    # entering the context manager runs the lifespan, which loads the model
    with TestClient(create_app(ServerConfig(seed=0))) as c:
        yield c


@pytest.fixture()
def cold_client():
    # no lifespan, no model: every endpoint must answer 503
    return TestClient(create_app())
