"""Single-writer engine runtime.

One totally ordered stream of inbound events (moves, tag sightings, speech
fragments, control actions) drives a logical clock. Timers for silence
windows, track timeouts, agent speech completion, responder latency, and
periodic checks fire deterministically between events, so the same inputs
always produce the same journal, transcript, and broadcasts. The simulator
and the gateway are both thin shells around this class.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from typing import Any

from . import engagement as eng
from .config import EngineConfig
from .conversation import (
    PromptBundle,
    Responder,
    ResponderReply,
    ScriptedResponder,
    UtteranceAssembler,
    assemble_prompt,
    choose_topic,
)
from .engagement import (
    AgentSpeechFinished,
    AgentUtteranceReady,
    AppendJournal,
    BehaviorCue,
    CueChanged,
    EngineErrorNote,
    EngineState,
    EpisodeEnded,
    Mode,
    PeriodicTick,
    PolicyInput,
    PresenceChanged,
    RequestUtterance,
    RulePolicies,
    SpeechStarted,
    UserUtteranceFinalized,
    UtteranceSurfaced,
    step,
)
from .errors import EngineError, OrderingError
from .journal import EntryKind, Journal, PASSERBY
from .memory import MemoryStore
from .proxemics import (
    IdentityFuser,
    IdentityRegistry,
    PresenceEvent,
    PresenceEventKind,
    PresenceTracker,
    ProxemicObservation,
    TagSighting,
    Zone,
)

log = logging.getLogger(__name__)

_DRAIN_LIMIT = 100_000


@dataclass(frozen=True)
class _Timer:
    deadline: int
    seq: int
    kind: str
    payload: tuple

    def __lt__(self, other: "_Timer") -> bool:
        return (self.deadline, self.seq) < (other.deadline, other.seq)


class Runtime:
    """Deterministic engine loop over a logical millisecond clock."""

    def __init__(
        self,
        config: EngineConfig,
        registry: IdentityRegistry | None = None,
        responder: Responder | None = None,
        policies: eng.Policies | None = None,
        memory: MemoryStore | None = None,
        summarizer=None,
        start_ts: int = 0,
    ):
        self.config = config
        self.registry = registry or IdentityRegistry()
        self.responder = responder or ScriptedResponder(
            config.responder.script, latency_ms=config.responder.latency_ms
        )
        self.policies = policies or RulePolicies(config)
        self.memory = memory or MemoryStore()
        self.summarizer = summarizer  # None = deterministic built-in
        self.clock = start_ts
        self.active = True

        self.journal = Journal()
        self.state = EngineState()
        self.tracker = PresenceTracker(config.zones, timeout_ms=config.track_timeout_ms)
        self.fuser = IdentityFuser(self.registry, window_ms=config.fuse_window_ms)
        self.assembler = UtteranceAssembler(silence_window_ms=config.silence_window_ms)

        self.bundles: list[dict[str, Any]] = []
        self._episode_transcript: list[tuple[str, str]] = []
        self._episode_topic = None
        self._policy_floor = 0  # journal position of the last episode end
        self._timers: list[_Timer] = []
        self._timer_seq = 0
        self._speech_timer: tuple[int, int] | None = None
        self._last_state_payload: dict[str, Any] | None = None
        self._out: list[dict[str, Any]] = []

        self._append_journal(
            AppendJournal(
                ts=start_ts,
                kind=EntryKind.DECISION,
                subject="Agent",
                structured={"event": "engine_start"},
                rendered="Engine started; idle and reading.",
            )
        )
        self._schedule(start_ts + config.periodic_check_ms, "periodic", ())

    # ------------------------------------------------------------------
    # Public API
    # ------------------------------------------------------------------

    def submit(self, message: dict[str, Any]) -> list[dict[str, Any]]:
        """Process one inbound event at its timestamp; returns broadcasts."""
        self._out = []
        try:
            ts = int(message["ts"])
        except (KeyError, TypeError, ValueError):
            self._error("bad_message", "event is missing a usable ts")
            return self._flush()
        if ts < self.clock:
            self._error(
                "out_of_order", f"event ts {ts} is before engine clock {self.clock}"
            )
            return self._flush()
        self._advance(ts, inclusive=False)
        self.clock = ts
        try:
            self._process(message, ts)
        except OrderingError as exc:
            self._error("out_of_order", str(exc))
        except EngineError as exc:
            self._error("engine_error", str(exc))
        self._advance(ts, inclusive=True)
        return self._flush()

    def advance_to(self, ts: int) -> list[dict[str, Any]]:
        """Advance the clock with no external event (live-mode ticker, drains)."""
        self._out = []
        if ts > self.clock:
            self._advance(ts, inclusive=True)
            self.clock = ts
        return self._flush()

    def rotate_context(self, document: dict[str, Any] | str, date: str) -> None:
        self.memory.rotate_daily(document, date)
        self._append_journal(
            AppendJournal(
                ts=self.clock,
                kind=EntryKind.DECISION,
                subject="Agent",
                structured={"event": "context_rotated", "date": date},
                rendered=f"Daily context rotated for {date}.",
            )
        )

    def state_payload(self) -> dict[str, Any]:
        tracks = []
        for feat in self._features(self.clock):
            tracks.append(
                {
                    "track_id": feat.track_id,
                    "zone": feat.zone.value,
                    "distance": round(feat.distance, 6),
                    "facing_offset": round(feat.facing_offset, 6),
                    "facing": feat.facing,
                    "name": feat.identity.name if feat.identity else None,
                }
            )
        return {
            "type": "state",
            "mode": self.state.mode.value,
            "engaged": (
                self.state.engaged_subject if self.state.mode != Mode.NOT_ENGAGED else None
            ),
            "turn_count": self.state.turn_count,
            "behavior_cue": self.state.cue.value,
            "tracks": tracks,
        }

    def snapshot_messages(self) -> list[dict[str, Any]]:
        """Everything a reconnecting client needs to rebuild an identical view."""
        messages: list[dict[str, Any]] = [self.state_payload()]
        for entry in self.journal.entries():
            messages.append({"type": "journal", "entry": entry.to_dict()})
            if entry.kind in (EntryKind.UTTERANCE_USER, EntryKind.UTTERANCE_AGENT):
                messages.append(
                    {
                        "type": "utterance",
                        "speaker": entry.structured.get("speaker", "user"),
                        "text": entry.structured.get("text", ""),
                        "interrupted": bool(entry.structured.get("interrupted", False)),
                    }
                )
            elif entry.kind == EntryKind.SUMMARY_WRITTEN:
                messages.append(
                    {
                        "type": "summary",
                        "subject": entry.subject,
                        "text": entry.structured.get("text", ""),
                    }
                )
        return messages

    # ------------------------------------------------------------------
    # Clock and timers
    # ------------------------------------------------------------------

    def _schedule(self, deadline: int, kind: str, payload: tuple) -> None:
        self._timer_seq += 1
        heapq.heappush(
            self._timers, _Timer(max(deadline, self.clock), self._timer_seq, kind, payload)
        )

    def _advance(self, ts: int, inclusive: bool) -> None:
        fired = 0
        while self._timers:
            head = self._timers[0]
            if head.deadline > ts or (head.deadline == ts and not inclusive):
                break
            heapq.heappop(self._timers)
            self.clock = max(self.clock, head.deadline)
            self._fire(head)
            fired += 1
            if fired > _DRAIN_LIMIT:
                raise EngineError("timer drain limit exceeded; timer storm suspected")

    def _fire(self, timer: _Timer) -> None:
        now = timer.deadline
        if timer.kind == "periodic":
            self._schedule(now + self.config.periodic_check_ms, "periodic", ())
            self._step(PeriodicTick(ts=now))
        elif timer.kind == "silence":
            track_id, last_fragment = timer.payload
            utterance = self.assembler.finalize_if_silent(track_id, last_fragment, now)
            if utterance is not None:
                self._user_utterance(track_id, utterance.text, utterance.started, now)
        elif timer.kind == "track_timeout":
            for event in self.tracker.expire(now):
                self._presence(event, released=True)
        elif timer.kind == "speech_done":
            (generation,) = timer.payload
            self._step(AgentSpeechFinished(ts=now, generation=generation))
        elif timer.kind == "responder":
            generation, text, purpose, warning = timer.payload
            self._step(
                AgentUtteranceReady(
                    ts=now, text=text, purpose=purpose, generation=generation,
                    warning=warning,
                )
            )
        elif timer.kind == "dwell_poll":
            track_id, deadline = timer.payload
            if self.tracker.dwell_deadline(track_id, self.config.zones.dwell_to_engage) == deadline:
                self._step(PeriodicTick(ts=now))

    # ------------------------------------------------------------------
    # Inbound event processing
    # ------------------------------------------------------------------

    def _process(self, message: dict[str, Any], ts: int) -> None:
        kind = message.get("type")
        if kind == "control":
            self._control(message, ts)
            return
        if not self.active:
            self._error("inactive", "engine is stopped; only control events are accepted")
            return
        if kind == "move":
            self._move(message, ts)
        elif kind == "tag":
            self._tag(message, ts)
        elif kind == "speech":
            self._speech(message, ts)
        else:
            self._error("bad_message", f"unknown event type: {kind!r}")

    def _move(self, message: dict[str, Any], ts: int) -> None:
        obs = ProxemicObservation.from_pose(
            track_id=str(message["track_id"]),
            timestamp=ts,
            x=float(message["x"]),
            y=float(message["y"]),
            facing_deg=float(message.get("facing_deg", 0.0)),
        )
        before = set(self.fuser.associations())
        self.fuser.observe(obs)  # may bind a pending tag to this track
        events = self.tracker.observe(obs)
        bound_now = obs.track_id in set(self.fuser.associations()) - before
        for event in events:
            self._presence(event, released=False)
        if bound_now and not any(
            e.kind == PresenceEventKind.ENTERED_ZONE for e in events
        ):
            # The entry sentence would have carried the name; when the bind
            # lands mid-presence the recognition gets its own line instead.
            self._journal_recognition(obs.track_id, ts)
        self._schedule(ts + self.config.track_timeout_ms, "track_timeout", (obs.track_id,))
        dwell_deadline = self.tracker.dwell_deadline(
            obs.track_id, self.config.zones.dwell_to_engage
        )
        if dwell_deadline is not None and self.state.mode == Mode.NOT_ENGAGED:
            self._schedule(dwell_deadline, "dwell_poll", (obs.track_id, dwell_deadline))

    def _tag(self, message: dict[str, Any], ts: int) -> None:
        sighting = TagSighting(
            tag_id=str(message["tag_id"]), timestamp=ts, present=bool(message["present"])
        )
        before = set(self.fuser.associations())
        error = self.fuser.sight(sighting)
        if error is not None:
            self._error("unregistered_tag", error)
            return
        self._journal_new_recognitions(before, ts)

    def _journal_new_recognitions(self, before: set[str], ts: int) -> None:
        for track_id in sorted(set(self.fuser.associations()) - before):
            self._journal_recognition(track_id, ts)

    def _journal_recognition(self, track_id: str, ts: int) -> None:
        """A tag bound to a body already in the zone: put the name on record."""
        if self.tracker.zone_of(track_id) == Zone.OUTSIDE:
            return
        identity = self.fuser.identity_for(track_id)
        if identity is None:
            return
        self._append_journal(
            AppendJournal(
                ts=ts,
                kind=EntryKind.PRESENCE,
                subject=identity.name,
                structured={"track_id": track_id, "event": "recognized"},
                rendered=f"The person nearby is recognized as {identity.name}.",
            )
        )

    def _speech(self, message: dict[str, Any], ts: int) -> None:
        track_id = str(message["track_id"])
        text = str(message.get("text", ""))
        final = bool(message.get("final", False))
        self._step(SpeechStarted(ts=ts, track_id=track_id))
        utterance = self.assembler.add_fragment(track_id, text, final, ts)
        if utterance is not None:
            self._user_utterance(track_id, utterance.text, utterance.started, ts)
        elif self.assembler.has_pending(track_id):
            deadline = self.assembler.silence_deadline(track_id)
            if deadline is not None:
                self._schedule(deadline, "silence", (track_id, deadline - self.config.silence_window_ms))

    def _control(self, message: dict[str, Any], ts: int) -> None:
        action = message.get("action")
        if action == "tick":
            return  # The clock advance is the whole effect.
        if action == "start":
            self.active = True
            return
        if action == "stop":
            self.active = False
            return
        if action == "rotate_context":
            document = message.get("document")
            date = str(message.get("date", ""))
            if document is None:
                self._error("bad_message", "rotate_context requires a document")
                return
            try:
                self.rotate_context(document, date)
            except EngineError as exc:
                self._error("invalid_context", str(exc))
            return
        self._error("bad_message", f"unknown control action: {action!r}")

    # ------------------------------------------------------------------
    # Engine event helpers
    # ------------------------------------------------------------------

    def _presence(self, event: PresenceEvent, released: bool) -> None:
        identity = self.fuser.identity_for(event.track_id)
        if event.kind == PresenceEventKind.LEFT_ZONE:
            self.assembler.drop(event.track_id)
        self._step(PresenceChanged(ts=event.timestamp, event=event, identity=identity))
        if event.kind == PresenceEventKind.LEFT_ZONE and released:
            self.fuser.release_track(event.track_id)

    def _user_utterance(self, track_id: str, text: str, started: int, ts: int) -> None:
        identity = self.fuser.identity_for(track_id)
        zone = self.tracker.zone_of(track_id)
        self._step(
            UserUtteranceFinalized(
                ts=ts, track_id=track_id, text=text, started=started,
                zone=zone, identity=identity,
            )
        )

    def _features(self, now: int):
        feats = self.tracker.features(now)
        for feat in feats:
            feat.identity = self.fuser.identity_for(feat.track_id)
        return feats

    def _policy_input(self, now: int) -> PolicyInput:
        # Entries consumed by an earlier episode do not feed later decisions.
        window = [
            e
            for e in self.journal.window(self.config.journal_window)
            if e.sequence_no > self._policy_floor
        ]
        return PolicyInput(
            journal_window=tuple(window),
            state=self.state,
            features=tuple(self._features(now)),
            now=now,
        )

    def _step(self, event: eng.EngineEvent) -> None:
        previous = self.state
        result = step(self.state, event, self._policy_input(event.ts), self.policies, self.config)
        self.state = result.state

        new_episode = (
            self.state.episode_id != previous.episode_id and self.state.mode == Mode.ENGAGED
        )
        if new_episode:
            self._episode_transcript = []
            self._episode_topic = None

        for effect in result.effects:
            self._apply(effect)

        if self.state.speaking is not None:
            key = (self.state.speaking.generation, self.state.speaking.ends)
            if self._speech_timer != key:
                self._speech_timer = key
                self._schedule(self.state.speaking.ends, "speech_done", (key[0],))

    def _apply(self, effect: eng.Effect) -> None:
        if isinstance(effect, AppendJournal):
            self._append_journal(effect)
            if effect.kind in (EntryKind.UTTERANCE_USER, EntryKind.UTTERANCE_AGENT):
                speaker = effect.structured.get("speaker", "user")
                if speaker == "agent" or (
                    effect.structured.get("track_id") == self.state.engaged_track
                ):
                    self._episode_transcript.append((speaker, effect.structured.get("text", "")))
        elif isinstance(effect, UtteranceSurfaced):
            self._out.append(
                {
                    "type": "utterance",
                    "speaker": effect.speaker,
                    "text": effect.text,
                    "interrupted": effect.interrupted,
                }
            )
        elif isinstance(effect, CueChanged):
            pass  # The cue rides on the state broadcast.
        elif isinstance(effect, RequestUtterance):
            self._request_utterance(effect)
        elif isinstance(effect, EpisodeEnded):
            self._finish_episode(effect)
        elif isinstance(effect, EngineErrorNote):
            self._error(effect.code, effect.detail)

    def _request_utterance(self, effect: RequestUtterance) -> None:
        identity = self.state.engaged_identity
        context = self.memory.context
        relationship = None
        if identity is not None and context is not None:
            relationship = context.entry_for(identity.context_key)
            if identity.context_key is not None and relationship is None:
                self._append_journal(
                    AppendJournal(
                        ts=effect.ts,
                        kind=EntryKind.DECISION,
                        subject=identity.name,
                        structured={
                            "warning": f"no relationship entry for {identity.context_key}"
                        },
                        rendered=(
                            f"Note: {identity.name} is recognized but has no relationship "
                            "entry; treating them as a named passerby."
                        ),
                    )
                )
        memory_key = identity.memory_key if identity is not None else None
        memory_text = self.memory.recall(memory_key)
        if self._episode_topic is None and effect.purpose == "greeting":
            self._episode_topic = choose_topic(self.config.topics, memory_text)
        bundle = assemble_prompt(
            context=context,
            memory_text=memory_text,
            transcript=self._episode_transcript,
            topic=self._episode_topic,
            addressee_name=identity.name if identity is not None else None,
            relationship=relationship,
            purpose=effect.purpose,
        )
        self.bundles.append(
            {
                "ts": effect.ts,
                "episode_id": self.state.episode_id,
                "purpose": effect.purpose,
                "addressee": bundle.addressee,
                "tagged": identity is not None,
                "topic": bundle.topic,
                "system_text": bundle.system_text,
                "transcript": [list(t) for t in bundle.transcript],
            }
        )
        reply = self._dispatch_responder(bundle)
        self._schedule(
            effect.ts + getattr(self.responder, "latency_ms", 0),
            "responder",
            (effect.generation, reply.text, effect.purpose, reply.warning),
        )

    def _dispatch_responder(self, bundle: PromptBundle) -> ResponderReply:
        try:
            return self.responder.respond(bundle)
        except Exception as exc:  # A responder bug must not kill the loop.
            log.exception("responder raised")
            return ResponderReply(
                "Sorry, I lost my train of thought.", warning=f"responder raised: {exc}"
            )

    def _finish_episode(self, effect: EpisodeEnded) -> None:
        transcript = list(self._episode_transcript)
        self._episode_transcript = []
        topic = self._episode_topic
        self._episode_topic = None
        self.tracker.reset_dwell(effect.track_id, effect.ts)
        entries = self.journal.entries()
        self._policy_floor = entries[-1].sequence_no if entries else 0
        if not transcript:
            return
        date = ""
        if self.memory.context is not None and self.memory.context.valid_date:
            date = self.memory.context.valid_date
        record = self.memory.summarize_episode(
            transcript,
            effect.context_key,
            summarizer=self.summarizer,
            episode_id=effect.episode_id,
            date=date,
            timestamp=effect.ts,
            turn_count=effect.turn_count,
            topic=topic.title if topic is not None else None,
            protected_names=self.registry.names(),
        )
        subject = effect.name or PASSERBY
        self._append_journal(
            AppendJournal(
                ts=effect.ts,
                kind=EntryKind.SUMMARY_WRITTEN,
                subject=subject,
                structured={
                    "episode_id": effect.episode_id,
                    "text": record.text,
                    "warning": record.warning,
                },
                rendered=f"Summary saved for {subject}.",
            )
        )
        self._out.append({"type": "summary", "subject": subject, "text": record.text})
        if self.config.memory_file:
            try:
                self.memory.save(self.config.memory_file)
            except OSError:
                log.exception("failed to persist memory store")

    # ------------------------------------------------------------------
    # Output
    # ------------------------------------------------------------------

    def _append_journal(self, effect: AppendJournal) -> None:
        entry = self.journal.append(
            timestamp=effect.ts,
            kind=effect.kind,
            structured=effect.structured,
            rendered=effect.rendered,
            subject=effect.subject,
        )
        self._out.append({"type": "journal", "entry": entry.to_dict()})

    def _error(self, code: str, detail: str) -> None:
        log.warning("engine error [%s]: %s", code, detail)
        self._out.append({"type": "error", "code": code, "detail": detail})

    def _flush(self) -> list[dict[str, Any]]:
        payload = self.state_payload()
        if payload != self._last_state_payload:
            self._last_state_payload = payload
            self._out.append(payload)
        out, self._out = self._out, []
        return out
