from __future__ import annotations

import json

import pytest

from hallway_agent import EngineConfig, IdentityRegistry, PersonIdentity, ZoneConfig

from helpers import REPO_ROOT, make_config


@pytest.fixture
def zones() -> ZoneConfig:
    return ZoneConfig()


@pytest.fixture
def config() -> EngineConfig:
    return make_config()


@pytest.fixture
def context_doc() -> dict:
    return json.loads((REPO_ROOT / "config" / "user_context.json").read_text())


@pytest.fixture
def registry() -> IdentityRegistry:
    return IdentityRegistry(
        [
            PersonIdentity(tag_id="T-jack", name="Jack"),
            PersonIdentity(tag_id="T-x", name="X", context_key="X"),
            PersonIdentity(tag_id="T-y", name="Y", context_key="Y"),
        ]
    )
