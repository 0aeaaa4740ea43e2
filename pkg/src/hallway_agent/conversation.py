"""Turn management: utterance assembly, prompt construction, topics, and responders.

The responder is the only nondeterministic seam in a session. The scripted
responder is a deterministic table used by the simulator and tests; the
external responder speaks a chat-completion-style protocol and degrades to a
fixed fallback sentence on any failure, so the engine loop never stalls.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import httpx

from .config import Topic
from .memory import RelationshipEntry, UserContext

log = logging.getLogger(__name__)

STAY_PROMPT = "Would you like to stay and chat a little longer?"
SCRIPT_EXHAUSTED_REPLY = "Good chatting — I should get back to my book."
RESPONDER_FAILURE_REPLY = "Sorry, I lost my train of thought."
PASSERBY_ADDRESSEE = "a passerby"

CONDUCT_RULES = (
    "Conversation conduct: this is a casual hallway exchange. Keep it going with "
    "questions rather than closing it off, and only wind down when the other person "
    "clearly wants to leave. Once more than five exchanges have passed, be mindful "
    "of their time and ask whether they can stay to chat a little longer. Never end "
    "the conversation until they have answered that question."
)


@dataclass(frozen=True)
class Utterance:
    speaker: str  # "user" | "agent"
    text: str
    started: int
    ended: int
    final: bool = True
    interrupted: bool = False

    def __post_init__(self):
        if self.interrupted and self.speaker != "agent":
            raise ValueError("only agent utterances can be interrupted")
        if self.speaker == "agent" and self.final and not self.text:
            raise ValueError("final agent utterances must have text")


@dataclass
class _PendingUtterance:
    track_id: str
    started: int
    last_fragment: int
    fragments: list[str] = field(default_factory=list)

    def text(self) -> str:
        return " ".join(f for f in self.fragments if f)


class UtteranceAssembler:
    """Joins speech fragments into finalized user utterances.

    A fragment marked final by the client closes the utterance immediately;
    otherwise silence longer than the window closes it. Fragments inside the
    window extend the same utterance, joined with single spaces.
    """

    def __init__(self, silence_window_ms: int = 1500):
        self.silence_window_ms = silence_window_ms
        self._pending: dict[str, _PendingUtterance] = {}

    def add_fragment(
        self, track_id: str, text: str, final: bool, ts: int
    ) -> Utterance | None:
        pending = self._pending.get(track_id)
        if pending is None:
            pending = _PendingUtterance(track_id=track_id, started=ts, last_fragment=ts)
            self._pending[track_id] = pending
        fragment = text.strip()
        if fragment:
            pending.fragments.append(fragment)
        pending.last_fragment = ts
        if final:
            return self._finalize(track_id, ts)
        return None

    def silence_deadline(self, track_id: str) -> int | None:
        pending = self._pending.get(track_id)
        if pending is None:
            return None
        return pending.last_fragment + self.silence_window_ms

    def finalize_if_silent(self, track_id: str, last_fragment: int, now: int) -> Utterance | None:
        """Close an utterance whose silence window elapsed. Stale deadlines are ignored."""
        pending = self._pending.get(track_id)
        if pending is None or pending.last_fragment != last_fragment:
            return None
        return self._finalize(track_id, now)

    def has_pending(self, track_id: str) -> bool:
        return track_id in self._pending

    def drop(self, track_id: str) -> None:
        self._pending.pop(track_id, None)

    def _finalize(self, track_id: str, ended: int) -> Utterance | None:
        pending = self._pending.pop(track_id)
        text = pending.text()
        if not text:
            return None
        return Utterance(
            speaker="user", text=text, started=pending.started,
            ended=pending.last_fragment if pending.last_fragment <= ended else ended,
        )


def interrupts(speech_ts: int, speaking_ends: int) -> bool:
    """Barge-in boundary: speech exactly at the end of agent speech does not interrupt."""
    return speech_ts < speaking_ends


@dataclass(frozen=True)
class PromptBundle:
    """Everything the responder sees for one agent utterance."""

    system_text: str
    transcript: tuple[tuple[str, str], ...]
    addressee: str
    purpose: str = "reply"  # greeting | reply | stay_prompt | farewell
    topic: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "system_text": self.system_text,
            "transcript": [list(t) for t in self.transcript],
            "addressee": self.addressee,
            "purpose": self.purpose,
            "topic": self.topic,
        }


def assemble_prompt(
    context: UserContext | None,
    memory_text: str,
    transcript: Sequence[tuple[str, str]],
    topic: Topic | None,
    addressee_name: str | None,
    relationship: RelationshipEntry | None = None,
    purpose: str = "reply",
) -> PromptBundle:
    """Deterministic system-prompt assembly in fixed section order.

    Sections that do not apply (no relationship entry, no stored memory, no
    topic) are omitted entirely rather than emitted blank, so passerby bundles
    carry no relationship content at all.
    """
    sections: list[str] = []
    if context is not None:
        sections.append(f"Background: {context.background}")
        sections.append(f"PersonalityTraits: {context.personality_traits}")
    if relationship is not None:
        sections.append(f"RelationshipInfo: {relationship.relationship_info}")
        sections.append(f"SourceIntent: {relationship.source_intent}")
    if memory_text:
        sections.append(f"Previous conversations: {memory_text}")
    if topic is not None:
        body = f" {topic.text}" if topic.text else ""
        sections.append(f"Topic of the day: {topic.title}.{body}")
    sections.append(CONDUCT_RULES)
    return PromptBundle(
        system_text="\n\n".join(sections),
        transcript=tuple((speaker, text) for speaker, text in transcript),
        addressee=addressee_name or PASSERBY_ADDRESSEE,
        purpose=purpose,
        topic=topic.title if topic is not None else None,
    )


def choose_topic(topics: Sequence[Topic], summary_text: str) -> Topic | None:
    """First topic whose title token is not already covered in the summary."""
    haystack = summary_text.lower()
    for topic in topics:
        if topic.title.lower() not in haystack:
            return topic
    return None


@dataclass(frozen=True)
class ResponderReply:
    text: str
    warning: str | None = None


class Responder(Protocol):
    latency_ms: int

    def respond(self, bundle: PromptBundle) -> ResponderReply: ...


class ScriptedResponder:
    """Deterministic reply table. Stay prompts bypass the table and stay verbatim."""

    def __init__(self, script: Sequence[str], latency_ms: int = 0):
        self._script = list(script)
        self._cursor = 0
        self.latency_ms = latency_ms

    def respond(self, bundle: PromptBundle) -> ResponderReply:
        if bundle.purpose == "stay_prompt":
            return ResponderReply(STAY_PROMPT)
        if self._cursor >= len(self._script):
            return ResponderReply(
                SCRIPT_EXHAUSTED_REPLY, warning="scripted responder exhausted"
            )
        text = self._script[self._cursor]
        self._cursor += 1
        return ResponderReply(text)


def chat_request_payload(bundle: PromptBundle) -> dict[str, Any]:
    messages: list[dict[str, str]] = [{"role": "system", "content": bundle.system_text}]
    for speaker, text in bundle.transcript:
        role = "assistant" if speaker == "agent" else "user"
        messages.append({"role": role, "content": text})
    return {"messages": messages}


def _extract_reply(body: str) -> str | None:
    try:
        data = json.loads(body)
    except json.JSONDecodeError:
        text = body.strip()
        return text or None
    if isinstance(data, dict):
        choices = data.get("choices")
        if isinstance(choices, list) and choices:
            message = choices[0].get("message", {})
            content = message.get("content")
            if isinstance(content, str) and content.strip():
                return content.strip()
        content = data.get("content")
        if isinstance(content, str) and content.strip():
            return content.strip()
    return None


class ExternalResponder:
    """Chat-completion-style HTTP responder with a hard timeout and fixed fallback.

    Stay prompts are controller-enforced and never leave the process.
    """

    def __init__(
        self,
        endpoint: str,
        timeout_ms: int = 8000,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.timeout_ms = timeout_ms
        self.latency_ms = 0
        self._client = httpx.Client(
            timeout=timeout_ms / 1000.0, transport=transport
        )

    def respond(self, bundle: PromptBundle) -> ResponderReply:
        if bundle.purpose == "stay_prompt":
            return ResponderReply(STAY_PROMPT)
        try:
            response = self._client.post(self.endpoint, json=chat_request_payload(bundle))
            response.raise_for_status()
        except httpx.HTTPError as exc:
            log.warning("responder request failed: %s", exc)
            return ResponderReply(
                RESPONDER_FAILURE_REPLY, warning=f"responder request failed: {exc}"
            )
        text = _extract_reply(response.text)
        if text is None:
            return ResponderReply(
                RESPONDER_FAILURE_REPLY, warning="responder reply was malformed"
            )
        return ResponderReply(text)

    def close(self) -> None:
        self._client.close()
