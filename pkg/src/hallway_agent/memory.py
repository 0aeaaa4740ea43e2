"""User context, per-person conversation summaries, and the general passerby summary.

Context documents use the interoperable field names ``Background``,
``PersonalityTraits`` and ``SocialRelationshipInfo`` (entries keyed by ``Who``
with ``RelationshipInfo`` and ``SourceIntent``). The context rotates daily;
accumulated memories survive rotation.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .errors import ContextValidationError

GENERAL_SUMMARY_CAP = 10

_STOPWORDS = frozenset(
    """a about after again all also am an and any are as at be because been before
    being but by can could did do does doing down for from had has have having he
    her here hers him his how i if in into is it its just like me more most my no
    nor not now of off on once only or other our out over own said say she so some
    such than that the their them then there these they this those through to too
    under until up very was we were what when where which while who whom why will
    with would you your yours yeah yes okay ok hi hey hello thanks thank really
    think know want going go get got well right sure maybe""".split()
)


@dataclass(frozen=True)
class RelationshipEntry:
    who: str
    relationship_info: str = ""
    source_intent: str = ""

    def __post_init__(self):
        if not self.who:
            raise ContextValidationError("Who must be nonempty", field="Who")


@dataclass(frozen=True)
class UserContext:
    background: str
    personality_traits: str
    social_relationships: tuple[RelationshipEntry, ...] = ()
    valid_date: str | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    def entry_for(self, key: str | None) -> RelationshipEntry | None:
        if key is None:
            return None
        for entry in self.social_relationships:
            if entry.who == key:
                return entry
        return None

    def relationship_names(self) -> list[str]:
        return [entry.who for entry in self.social_relationships]


def load_context(document: dict[str, Any] | str, valid_date: str | None = None) -> UserContext:
    """Validate a context document and return the typed context.

    Unknown extra fields are preserved but ignored. Missing required fields and
    duplicate ``Who`` keys are rejected.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ContextValidationError(f"context is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ContextValidationError("context document must be an object")

    for required in ("Background", "PersonalityTraits", "SocialRelationshipInfo"):
        if required not in document:
            raise ContextValidationError(f"{required} required", field=required)
    background = document["Background"]
    if not isinstance(background, str) or not background.strip():
        raise ContextValidationError("Background required", field="Background")
    traits = document["PersonalityTraits"]
    if not isinstance(traits, str):
        raise ContextValidationError("PersonalityTraits must be a string", field="PersonalityTraits")
    raw_entries = document["SocialRelationshipInfo"]
    if not isinstance(raw_entries, list):
        raise ContextValidationError(
            "SocialRelationshipInfo must be a list", field="SocialRelationshipInfo"
        )

    entries: list[RelationshipEntry] = []
    seen: set[str] = set()
    for raw in raw_entries:
        if not isinstance(raw, dict) or "Who" not in raw or not str(raw["Who"]).strip():
            raise ContextValidationError("Who required", field="Who")
        who = str(raw["Who"])
        if who in seen:
            raise ContextValidationError(f"duplicate Who: {who}", field="Who")
        seen.add(who)
        entries.append(
            RelationshipEntry(
                who=who,
                relationship_info=str(raw.get("RelationshipInfo", "")),
                source_intent=str(raw.get("SourceIntent", "")),
            )
        )

    extras = {
        k: v
        for k, v in document.items()
        if k not in ("Background", "PersonalityTraits", "SocialRelationshipInfo")
    }
    return UserContext(
        background=background,
        personality_traits=traits,
        social_relationships=tuple(entries),
        valid_date=valid_date,
        extras=extras,
    )


def load_context_file(path: str | Path, valid_date: str | None = None) -> UserContext:
    return load_context(Path(path).read_text(encoding="utf-8"), valid_date=valid_date)


@dataclass(frozen=True)
class SummaryRecord:
    episode_id: int
    date: str
    text: str
    warning: bool = False


@dataclass
class PersonMemory:
    key: str
    summaries: list[SummaryRecord] = field(default_factory=list)
    last_interaction: int = 0


@dataclass
class GeneralSummary:
    episodes: list[str] = field(default_factory=list)
    episode_count: int = 0

    @property
    def text(self) -> str:
        return "\n".join(self.episodes)


def deterministic_summary(
    transcript: Sequence[tuple[str, str]],
    turn_count: int,
    topic: str | None = None,
) -> str:
    """Template summary: turn count, seeded topic, and tokens recurring across utterances.

    A token counts once per utterance; tokens present in at least two
    utterances (minus stopwords) are listed in sorted order.
    """
    per_utterance: list[set[str]] = []
    for _, text in transcript:
        tokens = {
            t for t in re.findall(r"[a-zA-Z']+", text.lower()) if len(t) >= 3
        }
        per_utterance.append(tokens - _STOPWORDS)
    counts: dict[str, int] = {}
    for tokens in per_utterance:
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
    recurring = sorted(t for t, n in counts.items() if n >= 2)

    unit = "turn" if turn_count == 1 else "turns"
    parts = [f"Chatted for {turn_count} {unit}."]
    if topic:
        parts.append(f"Topic of the day: {topic}.")
    if recurring:
        parts.append("Talked about: " + ", ".join(recurring) + ".")
    return " ".join(parts)


def _excerpt(transcript: Sequence[tuple[str, str]]) -> str:
    tail = transcript[-2:]
    lines = [f"{speaker}: {text}" for speaker, text in tail]
    return "Summary unavailable; last exchange: " + " / ".join(lines)


def scrub_names(text: str, names: Iterable[str]) -> str:
    """Replace protected identity names (word-bounded, case-insensitive) with a neutral token."""
    for name in names:
        if not name:
            continue
        text = re.sub(rf"\b{re.escape(name)}\b", "someone", text, flags=re.IGNORECASE)
    return text


class MemoryStore:
    """Holds the active daily context plus everything remembered across days."""

    def __init__(self, context: UserContext | None = None):
        self.context = context
        self.persons: dict[str, PersonMemory] = {}
        self.general = GeneralSummary()
        self._next_episode_id = 1

    # -- context rotation ---------------------------------------------------

    def rotate_daily(self, document: dict[str, Any] | str, date: str) -> UserContext:
        """Swap in a new day's context. Memories persist; invalid documents are rejected."""
        new_context = load_context(document, valid_date=date)  # raises before any change
        self.context = new_context
        return new_context

    # -- summaries ----------------------------------------------------------

    def allocate_episode_id(self) -> int:
        episode_id = self._next_episode_id
        self._next_episode_id += 1
        return episode_id

    def summarize_episode(
        self,
        transcript: Sequence[tuple[str, str]],
        addressee_key: str | None,
        summarizer: Callable[[Sequence[tuple[str, str]]], str] | None = None,
        *,
        episode_id: int,
        date: str,
        timestamp: int,
        turn_count: int = 0,
        topic: str | None = None,
        protected_names: Iterable[str] = (),
    ) -> SummaryRecord:
        """Summarize an ended episode and store it for the right audience.

        Tagged addressees get their own record; anonymous episodes merge into
        the general summary with identity names scrubbed out first.
        """
        if not transcript:
            raise ValueError("cannot summarize an empty transcript")
        warning = False
        if summarizer is None:
            text = deterministic_summary(transcript, turn_count=turn_count, topic=topic)
        else:
            try:
                text = summarizer(transcript)
            except Exception:
                text = _excerpt(transcript)
                warning = True
        record = SummaryRecord(episode_id=episode_id, date=date, text=text, warning=warning)
        if addressee_key is not None:
            memory = self.persons.setdefault(addressee_key, PersonMemory(key=addressee_key))
            memory.summaries.append(record)
            memory.last_interaction = timestamp
        else:
            names = set(protected_names)
            if self.context is not None:
                names.update(self.context.relationship_names())
            clean = scrub_names(text, names)
            self.general.episodes.append(clean)
            del self.general.episodes[:-GENERAL_SUMMARY_CAP]
            self.general.episode_count += 1
            record = SummaryRecord(
                episode_id=episode_id, date=date, text=clean, warning=warning
            )
        return record

    def recall(self, key: str | None) -> str:
        """Stored summary text for a person key, or the general summary for passersby."""
        if key is None:
            return self.general.text
        memory = self.persons.get(key)
        if memory is None:
            return ""
        return "\n".join(r.text for r in memory.summaries)

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "persons": {
                key: {
                    "summaries": [
                        {
                            "episode_id": r.episode_id,
                            "date": r.date,
                            "text": r.text,
                            "warning": r.warning,
                        }
                        for r in mem.summaries
                    ],
                    "last_interaction": mem.last_interaction,
                }
                for key, mem in sorted(self.persons.items())
            },
            "general": {
                "episodes": list(self.general.episodes),
                "episode_count": self.general.episode_count,
            },
            "next_episode_id": self._next_episode_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], context: UserContext | None = None) -> "MemoryStore":
        store = cls(context)
        for key, raw in data.get("persons", {}).items():
            store.persons[key] = PersonMemory(
                key=key,
                summaries=[
                    SummaryRecord(
                        episode_id=r["episode_id"],
                        date=r["date"],
                        text=r["text"],
                        warning=r.get("warning", False),
                    )
                    for r in raw.get("summaries", [])
                ],
                last_interaction=raw.get("last_interaction", 0),
            )
        general = data.get("general", {})
        store.general = GeneralSummary(
            episodes=list(general.get("episodes", [])),
            episode_count=general.get("episode_count", 0),
        )
        store._next_episode_id = data.get("next_episode_id", 1)
        return store

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path, context: UserContext | None = None) -> "MemoryStore":
        return cls.from_dict(
            json.loads(Path(path).read_text(encoding="utf-8")), context=context
        )
