import json
from pathlib import Path

import pytest

from artifact.backend import MockServer, ScriptedFixture

GOLDENS_DIR = Path(__file__).parent / "goldens"


@pytest.fixture(scope="session")
def golden_fixture() -> ScriptedFixture:
    return ScriptedFixture.from_file(GOLDENS_DIR / "fixture.json")


@pytest.fixture(scope="session")
def golden_server(golden_fixture):
    with MockServer(golden_fixture) as server:
        yield server


def load_golden_cases() -> list[dict]:
    cases = []
    for path in sorted((GOLDENS_DIR / "protocol").glob("*.json")):
        cases.append(json.loads(path.read_text(encoding="utf-8")))
    return cases
