"""Append-only session journal.

Every presence and conversation event is stored twice: structurally (the raw
payload) and as the natural-language sentence the engagement policy reads.
Rendering is pure, so replaying the same structured events always reproduces
the same sentences byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import OrderingError
from .proxemics import PersonIdentity, PresenceEvent, PresenceEventKind

PASSERBY = "Passerby"


class EntryKind(str, Enum):
    PRESENCE = "presence"
    UTTERANCE_USER = "utterance_user"
    UTTERANCE_AGENT = "utterance_agent"
    DECISION = "decision"
    SUMMARY_WRITTEN = "summary_written"


@dataclass(frozen=True)
class JournalEntry:
    sequence_no: int
    timestamp: int
    kind: EntryKind
    structured: dict[str, Any]
    rendered: str
    subject: str

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["kind"] = self.kind.value
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "JournalEntry":
        return cls(
            sequence_no=data["sequence_no"],
            timestamp=data["timestamp"],
            kind=EntryKind(data["kind"]),
            structured=data["structured"],
            rendered=data["rendered"],
            subject=data["subject"],
        )


def _meters(distance: float) -> str:
    # Half-up rounding; the structured payload keeps full precision.
    rounded = math.floor(distance + 0.5)
    unit = "meter" if rounded == 1 else "meters"
    return f"{rounded} {unit}"


def render_presence(
    event: PresenceEvent, identity: PersonIdentity | None = None
) -> str:
    """Render a presence event into the journal sentence the policy consumes."""
    subject = identity.name if identity is not None else PASSERBY
    facing_clause = "facing you" if event.facing else "not facing you"
    if event.kind == PresenceEventKind.ENTERED_ZONE:
        if identity is None:
            return f"{PASSERBY} has entered the zone, {_meters(event.distance)} away, {facing_clause}."
        return (
            f"{identity.name} has entered the {event.zone.value} zone, "
            f"{_meters(event.distance)} away, {facing_clause}."
        )
    if event.kind == PresenceEventKind.LEFT_ZONE:
        return f"{subject} has left the zone."
    if event.kind == PresenceEventKind.MOVED_ZONE:
        return (
            f"{subject} is now in the {event.zone.value} zone, "
            f"{_meters(event.distance)} away, {facing_clause}."
        )
    if event.kind == PresenceEventKind.FACING_CHANGED:
        if event.facing:
            return f"{subject} is now facing you."
        return f"{subject} is no longer facing you."
    raise ValueError(f"unknown presence event kind: {event.kind}")


def render_user_utterance(subject: str, text: str) -> str:
    return f'{subject} said: "{text}"'


def render_agent_utterance(text: str, interrupted: bool) -> str:
    if interrupted:
        return f'You were interrupted while saying: "{text}"'
    return f'You said: "{text}"'


class Journal:
    """Single-writer append-only log with snapshot reads."""

    def __init__(self, entries: Iterable[JournalEntry] = ()):
        self._entries: list[JournalEntry] = list(entries)
        for prev, cur in zip(self._entries, self._entries[1:]):
            if cur.sequence_no != prev.sequence_no + 1:
                raise OrderingError("journal sequence numbers must be contiguous")

    def append(
        self,
        timestamp: int,
        kind: EntryKind,
        structured: dict[str, Any],
        rendered: str,
        subject: str,
    ) -> JournalEntry:
        if not rendered:
            raise ValueError("rendered sentence must be nonempty")
        if self._entries and timestamp < self._entries[-1].timestamp:
            raise OrderingError(
                f"journal timestamp regression: {timestamp} < {self._entries[-1].timestamp}"
            )
        entry = JournalEntry(
            sequence_no=self._entries[-1].sequence_no + 1 if self._entries else 1,
            timestamp=timestamp,
            kind=kind,
            structured=structured,
            rendered=rendered,
            subject=subject,
        )
        self._entries.append(entry)
        return entry

    def window(
        self, last_n: int, kinds: Sequence[EntryKind] | None = None
    ) -> list[JournalEntry]:
        """The most recent ``last_n`` matching entries, oldest first."""
        if last_n < 1:
            raise ValueError("last_n must be >= 1")
        if kinds is None:
            pool = self._entries
        else:
            wanted = set(kinds)
            pool = [e for e in self._entries if e.kind in wanted]
        return list(pool[-last_n:])

    def entries(self) -> list[JournalEntry]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def save_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self._entries:
                fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "Journal":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    entries.append(JournalEntry.from_dict(json.loads(line)))
        return cls(entries)
