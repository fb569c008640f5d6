from __future__ import annotations

import json
from pathlib import Path

import pytest

from mops.gateway import Gateway, ScriptedBackend
from mops.testkit import build_fixture

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_data() -> dict:
    return build_fixture()


@pytest.fixture()
def fixture_gateway(fixture_data) -> Gateway:
    return Gateway(ScriptedBackend.by_tag(fixture_data["replies"]))


@pytest.fixture()
def fixture_config_path(tmp_path: Path, fixture_data) -> Path:
    """Write the scripted config + script used by the offline CLI runs."""
    script_path = tmp_path / "script.json"
    script_path.write_text(
        json.dumps({"mode": "by-tag", "replies": fixture_data["replies"]}), encoding="utf-8"
    )
    config = {
        "backend": "scripted",
        "script_path": str(script_path),
        "branching": fixture_data["branching"],
        "themes": fixture_data["themes"],
        "seeds": [7],
        "perplexity": 0.5,
        "grid_m": 4,
        "embedding_provider": "stub",
        "embedding_dim": 16,
        "output_dir": str(tmp_path / "out"),
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    return config_path
