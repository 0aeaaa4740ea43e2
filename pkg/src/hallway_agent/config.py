"""Engine configuration: zone thresholds, timing knobs, responder and policy selection.

Everything the engine needs at runtime lives in one :class:`EngineConfig` so a
session can be snapshotted into a record and compared on replay.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any

from .errors import ConfigError

RESPONDER_URL_ENV = "HALLWAY_RESPONDER_URL"
DECISION_URL_ENV = "HALLWAY_DECISION_URL"


@dataclass(frozen=True)
class ZoneConfig:
    """Distance bands and engagement thresholds around the agent (at the origin)."""

    social_max: float = 1.2
    public_max: float = 4.5
    facing_tolerance: float = 45.0
    dwell_to_engage: int = 2000

    def __post_init__(self):
        if not (0 < self.social_max < self.public_max):
            raise ConfigError("zone thresholds require 0 < social_max < public_max")
        if not (0 < self.facing_tolerance <= 180):
            raise ConfigError("facing_tolerance must be in (0, 180]")
        if self.dwell_to_engage < 0:
            raise ConfigError("dwell_to_engage must be >= 0")


@dataclass(frozen=True)
class Topic:
    """One daily conversation seed: a title token plus the text handed to the responder."""

    title: str
    text: str = ""


@dataclass(frozen=True)
class ResponderSettings:
    kind: str = "scripted"  # scripted | external
    script: tuple[str, ...] = ()
    latency_ms: int = 0
    timeout_ms: int = 8000
    endpoint: str | None = None

    def __post_init__(self):
        if self.kind not in ("scripted", "external"):
            raise ConfigError(f"unknown responder kind: {self.kind!r}")
        if self.latency_ms < 0:
            raise ConfigError("responder latency_ms must be >= 0")

    def resolve_endpoint(self) -> str | None:
        return self.endpoint or os.environ.get(RESPONDER_URL_ENV)


@dataclass(frozen=True)
class EngineConfig:
    zones: ZoneConfig = field(default_factory=ZoneConfig)
    track_timeout_ms: int = 3000
    journal_window: int = 20
    periodic_check_ms: int = 10000
    silence_window_ms: int = 1500
    turn_limit: int = 5
    speech_ms_per_char: int = 50
    min_speech_ms: int = 400
    fuse_window_ms: int = 1000
    event_queue_limit: int = 10000
    policy: str = "rule"  # rule | llm
    decision_timeout_ms: int = 5000
    decision_endpoint: str | None = None
    responder: ResponderSettings = field(default_factory=ResponderSettings)
    topics: tuple[Topic, ...] = ()
    identities: tuple[dict[str, Any], ...] = ()  # tag_id / name / context_key
    context_file: str | None = None
    memory_file: str | None = None

    def __post_init__(self):
        if self.policy not in ("rule", "llm"):
            raise ConfigError(f"unknown policy: {self.policy!r}")
        for name in ("track_timeout_ms", "journal_window", "periodic_check_ms",
                     "silence_window_ms", "turn_limit", "speech_ms_per_char"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def resolve_decision_endpoint(self) -> str | None:
        return self.decision_endpoint or os.environ.get(DECISION_URL_ENV)

    def speech_duration_ms(self, text: str) -> int:
        """Deterministic speaking time for an agent utterance."""
        return max(self.min_speech_ms, self.speech_ms_per_char * len(text))

    def to_dict(self) -> dict[str, Any]:
        # JSON-normalized (tuples become lists) so records round-trip exactly.
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EngineConfig":
        data = dict(data)
        if "zones" in data and isinstance(data["zones"], dict):
            data["zones"] = ZoneConfig(**data["zones"])
        if "responder" in data and isinstance(data["responder"], dict):
            resp = dict(data["responder"])
            if "script" in resp:
                resp["script"] = tuple(resp["script"])
            data["responder"] = ResponderSettings(**resp)
        if "topics" in data:
            data["topics"] = tuple(
                Topic(**t) if isinstance(t, dict) else t for t in data["topics"]
            )
        if "identities" in data:
            data["identities"] = tuple(dict(i) for i in data["identities"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> EngineConfig:
    """Load an engine configuration from a JSON file.

    Relative file references resolve against the config file's directory.
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    for key in ("context_file", "memory_file"):
        value = data.get(key)
        if value and not Path(value).is_absolute():
            data[key] = str((path.parent / value).resolve())
    return EngineConfig.from_dict(data)
