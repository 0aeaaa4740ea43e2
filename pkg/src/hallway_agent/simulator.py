"""Deterministic scenario simulator and session records.

Scenarios are versioned JSON files with a timed event list. Running one in
lockstep mode advances the logical clock through the timeline only; identical
inputs produce byte-identical journals and transcripts, which is what the
replay verifier checks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .config import EngineConfig
from .conversation import Responder, ScriptedResponder
from .engagement import LlmPolicy, Policies, RulePolicies
from .errors import ScenarioError
from .journal import EntryKind, JournalEntry
from .memory import MemoryStore, load_context_file
from .proxemics import IdentityRegistry, PersonIdentity
from .runtime import Runtime

SCENARIO_VERSION = 1
_EVENT_TYPES = ("move", "tag", "speech", "control")


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int = 0
    identities: tuple[PersonIdentity, ...] = ()
    timeline: tuple[dict[str, Any], ...] = ()
    expected_journal_sha256: str | None = None
    version: int = SCENARIO_VERSION

    def validate(self) -> None:
        if self.version != SCENARIO_VERSION:
            raise ScenarioError(f"unsupported scenario version: {self.version}")
        registered = {i.tag_id for i in self.identities}
        last_at = None
        for index, event in enumerate(self.timeline):
            if "at" not in event:
                raise ScenarioError(f"timeline[{index}] is missing 'at'")
            at = event["at"]
            if last_at is not None and at < last_at:
                raise ScenarioError(
                    f"timeline[{index}] timestamp {at} is before {last_at}"
                )
            last_at = at
            kind = event.get("type")
            if kind not in _EVENT_TYPES:
                raise ScenarioError(f"timeline[{index}] has unknown type {kind!r}")
            if kind == "tag" and event.get("tag_id") not in registered:
                raise ScenarioError(
                    f"timeline[{index}] references unregistered tag {event.get('tag_id')!r}"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "name": self.name,
            "seed": self.seed,
            "identities": [
                {"tag_id": i.tag_id, "name": i.name, "context_key": i.context_key}
                for i in self.identities
            ],
            "timeline": [dict(e) for e in self.timeline],
            "expected_journal_sha256": self.expected_journal_sha256,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Scenario":
        try:
            identities = tuple(
                PersonIdentity(
                    tag_id=i["tag_id"], name=i["name"], context_key=i.get("context_key")
                )
                for i in data.get("identities", [])
            )
            scenario = cls(
                name=data["name"],
                seed=data.get("seed", 0),
                identities=identities,
                timeline=tuple(data.get("timeline", [])),
                expected_journal_sha256=data.get("expected_journal_sha256"),
                version=data.get("version", SCENARIO_VERSION),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        scenario.validate()
        return scenario

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def _canonical(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def _sha256(data: Any) -> str:
    return hashlib.sha256(_canonical(data).encode("utf-8")).hexdigest()


def transcript_from_journal(entries: list[JournalEntry]) -> list[dict[str, Any]]:
    transcript = []
    for entry in entries:
        if entry.kind in (EntryKind.UTTERANCE_USER, EntryKind.UTTERANCE_AGENT):
            transcript.append(
                {
                    "ts": entry.timestamp,
                    "speaker": entry.structured.get("speaker", "user"),
                    "subject": entry.subject,
                    "text": entry.structured.get("text", ""),
                    "interrupted": bool(entry.structured.get("interrupted", False)),
                }
            )
    return transcript


@dataclass
class SessionRecord:
    scenario: dict[str, Any]
    config: dict[str, Any]
    journal: list[dict[str, Any]]
    transcript: list[dict[str, Any]]
    bundles: list[dict[str, Any]]
    memory: dict[str, Any]
    journal_sha256: str
    transcript_sha256: str

    @property
    def name(self) -> str:
        return self.scenario.get("name", "")

    @property
    def seed(self) -> int:
        return self.scenario.get("seed", 0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "config": self.config,
            "journal": self.journal,
            "transcript": self.transcript,
            "bundles": self.bundles,
            "memory": self.memory,
            "journal_sha256": self.journal_sha256,
            "transcript_sha256": self.transcript_sha256,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SessionRecord":
        return cls(**{k: data[k] for k in (
            "scenario", "config", "journal", "transcript", "bundles", "memory",
            "journal_sha256", "transcript_sha256",
        )})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "SessionRecord":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_runtime(
    config: EngineConfig,
    scenario: Scenario | None = None,
    responder: Responder | None = None,
    memory: MemoryStore | None = None,
    policies: Policies | None = None,
    summarizer=None,
) -> Runtime:
    registry = IdentityRegistry(scenario.identities if scenario else ())
    for raw in config.identities:
        if raw.get("tag_id") not in {i.tag_id for i in (scenario.identities if scenario else ())}:
            registry.add(
                PersonIdentity(
                    tag_id=raw["tag_id"],
                    name=raw["name"],
                    context_key=raw.get("context_key"),
                )
            )
    if memory is None:
        if config.memory_file and Path(config.memory_file).exists():
            memory = MemoryStore.load(config.memory_file)
        else:
            memory = MemoryStore()
        if config.context_file:
            memory.context = load_context_file(config.context_file)
    if responder is None and config.responder.kind == "scripted":
        responder = ScriptedResponder(
            config.responder.script, latency_ms=config.responder.latency_ms
        )
    if policies is None:
        policies = LlmPolicy(config) if config.policy == "llm" else RulePolicies(config)
    return Runtime(
        config=config,
        registry=registry,
        responder=responder,
        policies=policies,
        memory=memory,
        summarizer=summarizer,
    )


def run_scenario(
    scenario: Scenario,
    config: EngineConfig,
    responder: Responder | None = None,
    memory: MemoryStore | None = None,
    policies: Policies | None = None,
    summarizer=None,
) -> SessionRecord:
    """Execute a scenario in lockstep mode and return the replayable record."""
    scenario.validate()
    runtime = build_runtime(config, scenario, responder, memory, policies, summarizer)
    for event in scenario.timeline:
        message = dict(event)
        message["ts"] = message.pop("at")
        if message["type"] == "control" and message.get("action") == "rotate_context":
            # Keep rotation in-band so records embed the full day sequence.
            pass
        runtime.submit(message)
    journal = [entry.to_dict() for entry in runtime.journal.entries()]
    transcript = transcript_from_journal(runtime.journal.entries())
    return SessionRecord(
        scenario=scenario.to_dict(),
        config=config.to_dict(),
        journal=journal,
        transcript=transcript,
        bundles=list(runtime.bundles),
        memory=runtime.memory.to_dict(),
        journal_sha256=_sha256(journal),
        transcript_sha256=_sha256(transcript),
    )


@dataclass(frozen=True)
class ReplayVerdict:
    passed: bool
    detail: str
    first_divergence: int | None = None
    config_mismatch: bool = False


def replay(record: SessionRecord, config: EngineConfig | None = None) -> ReplayVerdict:
    """Re-execute a record's inputs and compare journal and transcript hashes."""
    if config is not None and config.to_dict() != record.config:
        return ReplayVerdict(
            passed=False,
            detail="config mismatch between record and current build; comparison skipped",
            config_mismatch=True,
        )
    run_config = EngineConfig.from_dict(record.config)
    scenario = Scenario.from_dict(record.scenario)
    rerun = run_scenario(scenario, run_config)
    # Hash what the record actually contains; a tampered line must not hide
    # behind a stale recorded hash.
    recorded_journal_hash = _sha256(record.journal)
    recorded_transcript_hash = _sha256(record.transcript)
    if (
        rerun.journal_sha256 == recorded_journal_hash
        and rerun.transcript_sha256 == recorded_transcript_hash
    ):
        return ReplayVerdict(passed=True, detail="journal and transcript hashes match")
    divergence = None
    for ours, theirs in zip(rerun.journal, record.journal):
        if ours != theirs:
            divergence = theirs.get("sequence_no")
            break
    if divergence is None:
        divergence = min(len(rerun.journal), len(record.journal)) + 1
    return ReplayVerdict(
        passed=False,
        detail=f"journal diverges at sequence_no {divergence}",
        first_divergence=divergence,
    )
