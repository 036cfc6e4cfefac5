import json
from pathlib import Path

import pytest

from flowcheck.lang import Command, parse_program
from flowcheck.policy import PolicyFile

CORPUS = Path(__file__).parent.parent / "corpus"


def load_program(name: str) -> Command:
    return parse_program((CORPUS / name).read_text())


def load_policy(name: str) -> PolicyFile:
    return PolicyFile.load(CORPUS / name)


@pytest.fixture
def corpus() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def expected() -> dict:
    return json.loads((CORPUS / "expected.json").read_text())


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    from flowcheck.settings import settings

    monkeypatch.setattr(settings, "cache_dir", tmp_path / "typings")
    return settings.cache_dir
