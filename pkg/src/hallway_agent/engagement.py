"""Engagement state machine and decision policies.

The engine is a pure transition function over three modes: not engaged,
engaged, and awaiting the stay answer. ``step`` consumes one engine event and
returns the next state plus a list of effects (journal appends, utterance
requests, cue changes, episode endings). All side effects are interpreted by
the surrounding runtime, which keeps transitions deterministic and replayable.

Two hard rules are enforced structurally, regardless of the active policy:
a zone exit by the engaged person always disengages, and the engine never
leaves the awaiting-answer mode without a user answer or a zone exit.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Protocol, Union

import httpx

from .config import EngineConfig
from .errors import StateError
from .journal import (
    EntryKind,
    JournalEntry,
    PASSERBY,
    render_agent_utterance,
    render_presence,
    render_user_utterance,
)
from .proxemics import (
    PersonIdentity,
    PresenceEvent,
    PresenceEventKind,
    TrackFeatures,
    Zone,
)

log = logging.getLogger(__name__)


class Mode(str, Enum):
    NOT_ENGAGED = "NotEngaged"
    ENGAGED = "Engaged"
    AWAITING_STAY_ANSWER = "AwaitingStayAnswer"


class Verdict(str, Enum):
    ENGAGE = "ENGAGE"
    STAY = "STAY"
    CONTINUE = "CONTINUE"
    REQUEST_STAY = "REQUEST_STAY"
    DISENGAGE = "DISENGAGE"


NOT_ENGAGED_VERDICTS = frozenset({Verdict.ENGAGE, Verdict.STAY})
ENGAGED_VERDICTS = frozenset({Verdict.CONTINUE, Verdict.REQUEST_STAY, Verdict.DISENGAGE})


class BehaviorCue(str, Enum):
    IDLE_READING = "idle_reading"
    LISTENING = "listening"
    GREETING = "greeting"
    SPEAKING = "speaking"


@dataclass(frozen=True)
class EngagementDecision:
    verdict: Verdict
    reason: str = ""
    track_id: str | None = None
    warning: str | None = None  # set when a policy fell back or misbehaved


@dataclass(frozen=True)
class PolicyInput:
    """Everything a decision policy may look at."""

    journal_window: tuple[JournalEntry, ...]
    state: "EngineState"
    features: tuple[TrackFeatures, ...]
    now: int
    last_user_utterance: str | None = None


@dataclass(frozen=True)
class InFlightSpeech:
    """An agent utterance currently being voiced."""

    text: str
    purpose: str
    started: int
    ends: int
    generation: int


@dataclass(frozen=True)
class EngineState:
    mode: Mode = Mode.NOT_ENGAGED
    engaged_track: str | None = None
    engaged_identity: PersonIdentity | None = None
    turn_count: int = 0
    stay_prompt_issued: bool = False
    episode_started: int = 0
    # internals
    stay_base: int = 0
    generation: int = 0
    episode_id: int = 0
    episodes_run: int = 0
    ending: bool = False
    pending_request: bool = False
    speaking: InFlightSpeech | None = None
    cue: BehaviorCue = BehaviorCue.IDLE_READING

    @property
    def engaged_subject(self) -> str:
        if self.engaged_identity is not None:
            return self.engaged_identity.name
        return PASSERBY

    def check_invariants(self) -> None:
        if self.mode == Mode.NOT_ENGAGED:
            assert self.engaged_track is None
            assert self.turn_count == 0
            assert not self.stay_prompt_issued
        if self.mode == Mode.AWAITING_STAY_ANSWER:
            assert self.stay_prompt_issued


def idle_state(previous: "EngineState", generation_bump: bool = True) -> EngineState:
    return EngineState(
        generation=previous.generation + (1 if generation_bump else 0),
        episodes_run=previous.episodes_run,
        cue=BehaviorCue.IDLE_READING,
    )


# ---------------------------------------------------------------------------
# Engine events (inputs to step)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PresenceChanged:
    ts: int
    event: PresenceEvent
    identity: PersonIdentity | None = None


@dataclass(frozen=True)
class SpeechStarted:
    ts: int
    track_id: str


@dataclass(frozen=True)
class UserUtteranceFinalized:
    ts: int
    track_id: str
    text: str
    started: int
    zone: Zone
    identity: PersonIdentity | None = None


@dataclass(frozen=True)
class AgentUtteranceReady:
    ts: int
    text: str
    purpose: str
    generation: int
    warning: str | None = None


@dataclass(frozen=True)
class AgentSpeechFinished:
    ts: int
    generation: int


@dataclass(frozen=True)
class PeriodicTick:
    ts: int


EngineEvent = Union[
    PresenceChanged,
    SpeechStarted,
    UserUtteranceFinalized,
    AgentUtteranceReady,
    AgentSpeechFinished,
    PeriodicTick,
]


# ---------------------------------------------------------------------------
# Effects (outputs of step)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AppendJournal:
    ts: int
    kind: EntryKind
    subject: str
    structured: dict[str, Any]
    rendered: str


@dataclass(frozen=True)
class RequestUtterance:
    ts: int
    purpose: str
    generation: int
    track_id: str | None
    name: str | None
    user_text: str | None = None


@dataclass(frozen=True)
class CueChanged:
    cue: BehaviorCue


@dataclass(frozen=True)
class UtteranceSurfaced:
    """An utterance became audible (or was cut off); the gateway broadcasts these."""

    speaker: str
    text: str
    interrupted: bool


@dataclass(frozen=True)
class EpisodeEnded:
    ts: int
    episode_id: int
    track_id: str
    name: str | None
    context_key: str | None
    episode_started: int
    turn_count: int
    farewell: bool


@dataclass(frozen=True)
class EngineErrorNote:
    code: str
    detail: str


Effect = Union[
    AppendJournal,
    RequestUtterance,
    CueChanged,
    UtteranceSurfaced,
    EpisodeEnded,
    EngineErrorNote,
]


@dataclass(frozen=True)
class StepResult:
    state: EngineState
    effects: tuple[Effect, ...]


# ---------------------------------------------------------------------------
# Rule policies
# ---------------------------------------------------------------------------

_DECLINE_WORDS = re.compile(
    r"\b(no|nope|nah|can't|cant|cannot|won't|wont|gotta|leave|leaving|bye|goodbye|busy|later|run)\b",
    re.IGNORECASE,
)


def answer_declines(text: str) -> bool:
    """Stay-answer classification: decline on a decline token, accept otherwise."""
    return bool(_DECLINE_WORDS.search(text))


def _tracks_that_spoke(window: tuple[JournalEntry, ...]) -> set[str]:
    spoke: set[str] = set()
    for entry in window:
        if entry.kind != EntryKind.UTTERANCE_USER:
            continue
        track = entry.structured.get("track_id")
        zone = entry.structured.get("zone")
        if track and zone in (Zone.SOCIAL.value, Zone.PUBLIC.value):
            spoke.add(track)
    return spoke


def rule_engagement_policy(
    policy_input: PolicyInput, config: EngineConfig
) -> EngagementDecision:
    """Deterministic engagement check.

    A track qualifies by sustained social-zone facing dwell, or by having
    spoken from inside a zone within the journal window. Ties break to the
    nearer track, then the lower track id.
    """
    if policy_input.state.mode != Mode.NOT_ENGAGED:
        raise StateError("engagement check requires the not-engaged mode")
    zones = config.zones
    spoke = _tracks_that_spoke(policy_input.journal_window)
    qualifying: list[tuple[TrackFeatures, str]] = []
    for feat in policy_input.features:
        if (
            feat.zone == Zone.SOCIAL
            and feat.facing
            and feat.dwell_ms >= zones.dwell_to_engage
        ):
            qualifying.append((feat, "lingering close by, facing the agent"))
        elif feat.track_id in spoke and feat.zone in (Zone.SOCIAL, Zone.PUBLIC):
            qualifying.append((feat, "addressed the agent directly"))
    if not qualifying:
        return EngagementDecision(Verdict.STAY, "no interaction intent observed")
    best, reason = min(qualifying, key=lambda q: (q[0].distance, q[0].track_id))
    return EngagementDecision(Verdict.ENGAGE, reason, track_id=best.track_id)


def rule_disengagement_check(
    policy_input: PolicyInput, config: EngineConfig
) -> EngagementDecision:
    """Deterministic disengagement check.

    Zone exit overrides everything. Past the turn limit the agent asks to
    stay exactly once per arming period, and in the awaiting-answer mode only
    an actual answer can resolve the episode.
    """
    state = policy_input.state
    if state.mode == Mode.NOT_ENGAGED:
        raise StateError("disengagement check requires an engaged mode")
    engaged = next(
        (f for f in policy_input.features if f.track_id == state.engaged_track), None
    )
    if engaged is None or engaged.zone == Zone.OUTSIDE:
        return EngagementDecision(
            Verdict.DISENGAGE, "engaged person left the zone", track_id=state.engaged_track
        )
    if (
        state.mode == Mode.ENGAGED
        and not state.stay_prompt_issued
        and state.turn_count - state.stay_base > config.turn_limit
    ):
        return EngagementDecision(
            Verdict.REQUEST_STAY,
            f"conversation passed {config.turn_limit} turns",
            track_id=state.engaged_track,
        )
    if state.mode == Mode.AWAITING_STAY_ANSWER and policy_input.last_user_utterance:
        if answer_declines(policy_input.last_user_utterance):
            return EngagementDecision(
                Verdict.DISENGAGE, "declined to stay", track_id=state.engaged_track
            )
        return EngagementDecision(
            Verdict.CONTINUE, "agreed to stay longer", track_id=state.engaged_track
        )
    return EngagementDecision(Verdict.CONTINUE, "conversation continues")


class Policies(Protocol):
    def engagement_check(self, policy_input: PolicyInput) -> EngagementDecision: ...

    def disengagement_check(self, policy_input: PolicyInput) -> EngagementDecision: ...


class RulePolicies:
    def __init__(self, config: EngineConfig):
        self.config = config

    def engagement_check(self, policy_input: PolicyInput) -> EngagementDecision:
        return rule_engagement_policy(policy_input, self.config)

    def disengagement_check(self, policy_input: PolicyInput) -> EngagementDecision:
        return rule_disengagement_check(policy_input, self.config)


# ---------------------------------------------------------------------------
# LLM-backed policy with rule fallback
# ---------------------------------------------------------------------------

ENGAGEMENT_SYSTEM_PROMPT = (
    "You decide whether an embodied hallway agent should start a conversation "
    "with a nearby person, based on the journal of recent events. Engage when "
    "someone lingers close by facing the agent or speaks to it; otherwise stay "
    "idle. Reply with a single first line: ENGAGE or STAY, optionally followed "
    "by ': reason'."
)

DISENGAGEMENT_SYSTEM_PROMPT = (
    "You decide whether an embodied hallway agent should keep a conversation "
    "going, ask whether the person can stay longer, or end it. Do not end the "
    "conversation unless the person clearly wants to leave, and once the "
    "exchange has run long, ask first and wait for their answer. Reply with a "
    "single first line: CONTINUE, REQUEST_STAY, or DISENGAGE, optionally "
    "followed by ': reason'."
)

_VERDICT_LINE = re.compile(
    r"^(ENGAGE|STAY|CONTINUE|REQUEST_STAY|DISENGAGE)(?::\s*(.*))?\s*$"
)


def parse_verdict(reply: str) -> tuple[Verdict, str] | None:
    """Parse the one-line reply grammar; None when the first line has no verdict token."""
    first_line = reply.strip().splitlines()[0].strip() if reply.strip() else ""
    match = _VERDICT_LINE.match(first_line)
    if match is None:
        return None
    return Verdict(match.group(1)), match.group(2) or ""


def render_policy_request(system_prompt: str, policy_input: PolicyInput) -> dict[str, Any]:
    journal_text = "\n".join(e.rendered for e in policy_input.journal_window) or "(empty journal)"
    return {
        "messages": [
            {"role": "system", "content": system_prompt},
            {"role": "user", "content": journal_text},
        ]
    }


class LlmPolicy:
    """Decision policy backed by an external service, guarded by the rule policy.

    Any transport failure, timeout, or unparseable reply falls back to the
    deterministic rule result and carries a warning so the fallback lands in
    the journal. The engine loop never crashes on a policy call.
    """

    def __init__(
        self,
        config: EngineConfig,
        endpoint: str | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.config = config
        self.endpoint = endpoint or config.resolve_decision_endpoint()
        self._rules = RulePolicies(config)
        self._client = httpx.Client(
            timeout=config.decision_timeout_ms / 1000.0, transport=transport
        )

    def engagement_check(self, policy_input: PolicyInput) -> EngagementDecision:
        return self._check(
            policy_input, ENGAGEMENT_SYSTEM_PROMPT, NOT_ENGAGED_VERDICTS,
            self._rules.engagement_check,
        )

    def disengagement_check(self, policy_input: PolicyInput) -> EngagementDecision:
        return self._check(
            policy_input, DISENGAGEMENT_SYSTEM_PROMPT, ENGAGED_VERDICTS,
            self._rules.disengagement_check,
        )

    def _check(self, policy_input, system_prompt, allowed, fallback) -> EngagementDecision:
        if not self.endpoint:
            decision = fallback(policy_input)
            return replace(decision, warning="no decision service configured; used rule policy")
        try:
            response = self._client.post(
                self.endpoint, json=render_policy_request(system_prompt, policy_input)
            )
            response.raise_for_status()
            reply = self._extract(response.text)
        except httpx.HTTPError as exc:
            decision = fallback(policy_input)
            return replace(decision, warning=f"decision service failed ({exc}); used rule policy")
        parsed = parse_verdict(reply) if reply is not None else None
        if parsed is None or parsed[0] not in allowed:
            decision = fallback(policy_input)
            return replace(
                decision, warning="decision service reply had no usable verdict; used rule policy"
            )
        verdict, reason = parsed
        track_id = None
        if verdict == Verdict.ENGAGE:
            candidates = sorted(policy_input.features, key=lambda f: (f.distance, f.track_id))
            if not candidates:
                decision = fallback(policy_input)
                return replace(
                    decision, warning="decision service engaged with no candidate; used rule policy"
                )
            track_id = candidates[0].track_id
        elif policy_input.state.engaged_track is not None:
            track_id = policy_input.state.engaged_track
        return EngagementDecision(verdict, reason, track_id=track_id)

    @staticmethod
    def _extract(body: str) -> str | None:
        import json as _json

        try:
            data = _json.loads(body)
        except ValueError:
            return body
        if isinstance(data, dict):
            choices = data.get("choices")
            if isinstance(choices, list) and choices:
                content = choices[0].get("message", {}).get("content")
                if isinstance(content, str):
                    return content
            content = data.get("content")
            if isinstance(content, str):
                return content
        return None

    def close(self) -> None:
        self._client.close()


# ---------------------------------------------------------------------------
# The transition function
# ---------------------------------------------------------------------------


def step(
    state: EngineState,
    event: EngineEvent,
    policy_input: PolicyInput,
    policies: Policies,
    config: EngineConfig,
) -> StepResult:
    """Apply one engine event. Pure: identical inputs and policy verdicts give
    identical outputs."""
    if isinstance(event, PresenceChanged):
        return _on_presence(state, event, policy_input, policies, config)
    if isinstance(event, SpeechStarted):
        return _on_speech_started(state, event)
    if isinstance(event, UserUtteranceFinalized):
        return _on_user_utterance(state, event, policy_input, policies, config)
    if isinstance(event, AgentUtteranceReady):
        return _on_agent_ready(state, event, config)
    if isinstance(event, AgentSpeechFinished):
        return _on_agent_finished(state, event, policy_input, policies, config)
    if isinstance(event, PeriodicTick):
        return _on_tick(state, event, policy_input, policies, config)
    return StepResult(
        state, (EngineErrorNote("unknown_event", f"unknown event kind: {type(event).__name__}"),)
    )


def _presence_journal(event: PresenceChanged) -> AppendJournal:
    ev = event.event
    subject = event.identity.name if event.identity is not None else PASSERBY
    return AppendJournal(
        ts=event.ts,
        kind=EntryKind.PRESENCE,
        subject=subject,
        structured={
            "track_id": ev.track_id,
            "event": ev.kind.value,
            "zone": ev.zone.value,
            "distance": ev.distance,
            "facing": ev.facing,
            "facing_offset": ev.facing_offset,
        },
        rendered=render_presence(ev, event.identity),
    )


def _decision_journal(
    ts: int, subject: str, decision: EngagementDecision, note: str
) -> AppendJournal:
    return AppendJournal(
        ts=ts,
        kind=EntryKind.DECISION,
        subject=subject,
        structured={
            "verdict": decision.verdict.value,
            "reason": decision.reason,
            "track_id": decision.track_id,
        },
        rendered=note,
    )


def _warning_journal(ts: int, subject: str, warning: str) -> AppendJournal:
    return AppendJournal(
        ts=ts,
        kind=EntryKind.DECISION,
        subject=subject,
        structured={"warning": warning},
        rendered=f"Note: {warning}.",
    )


def _augment_window(policy_input: PolicyInput, appended: list[AppendJournal]) -> PolicyInput:
    """Make journal effects produced earlier in this step visible to the policy."""
    if not appended:
        return policy_input
    window = list(policy_input.journal_window)
    next_seq = window[-1].sequence_no + 1 if window else 1
    for eff in appended:
        window.append(
            JournalEntry(
                sequence_no=next_seq,
                timestamp=eff.ts,
                kind=eff.kind,
                structured=eff.structured,
                rendered=eff.rendered,
                subject=eff.subject,
            )
        )
        next_seq += 1
    return replace(policy_input, journal_window=tuple(window))


def _interrupt_speech(state: EngineState, ts: int, effects: list[Effect]) -> EngineState:
    """Cut off the in-flight agent utterance and invalidate its generation."""
    speaking = state.speaking
    assert speaking is not None
    effects.append(
        AppendJournal(
            ts=ts,
            kind=EntryKind.UTTERANCE_AGENT,
            subject=state.engaged_subject,
            structured={
                "speaker": "agent",
                "text": speaking.text,
                "purpose": speaking.purpose,
                "interrupted": True,
                "started": speaking.started,
                "track_id": state.engaged_track,
            },
            rendered=render_agent_utterance(speaking.text, interrupted=True),
        )
    )
    effects.append(UtteranceSurfaced("agent", speaking.text, interrupted=True))
    return replace(
        state, speaking=None, pending_request=False, generation=state.generation + 1
    )


def _end_episode(
    state: EngineState, ts: int, effects: list[Effect], farewell: bool
) -> EngineState:
    """Close the current episode: summarize if anything was said, return to idle."""
    if state.speaking is not None:
        # Journal the cut-off utterance at the ending timestamp to keep order.
        speaking = state.speaking
        effects.append(
            AppendJournal(
                ts=ts,
                kind=EntryKind.UTTERANCE_AGENT,
                subject=state.engaged_subject,
                structured={
                    "speaker": "agent",
                    "text": speaking.text,
                    "purpose": speaking.purpose,
                    "interrupted": True,
                    "started": speaking.started,
                    "track_id": state.engaged_track,
                },
                rendered=render_agent_utterance(speaking.text, interrupted=True),
            )
        )
        effects.append(UtteranceSurfaced("agent", speaking.text, interrupted=True))
    assert state.engaged_track is not None
    effects.append(
        EpisodeEnded(
            ts=ts,
            episode_id=state.episode_id,
            track_id=state.engaged_track,
            name=state.engaged_identity.name if state.engaged_identity else None,
            context_key=(
                state.engaged_identity.memory_key if state.engaged_identity else None
            ),
            episode_started=state.episode_started,
            turn_count=state.turn_count,
            farewell=farewell,
        )
    )
    effects.append(CueChanged(BehaviorCue.IDLE_READING))
    return idle_state(state)


def _engage(
    state: EngineState,
    ts: int,
    decision: EngagementDecision,
    identity: PersonIdentity | None,
    effects: list[Effect],
) -> EngineState:
    subject = identity.name if identity is not None else PASSERBY
    effects.append(
        _decision_journal(ts, subject, decision, f"Decided to engage {subject}: {decision.reason}.")
    )
    if decision.warning:
        effects.append(_warning_journal(ts, subject, decision.warning))
    new_state = EngineState(
        mode=Mode.ENGAGED,
        engaged_track=decision.track_id,
        engaged_identity=identity,
        turn_count=0,
        stay_prompt_issued=False,
        episode_started=ts,
        stay_base=0,
        generation=state.generation + 1,
        episode_id=state.episodes_run + 1,
        episodes_run=state.episodes_run + 1,
        pending_request=True,
        cue=BehaviorCue.GREETING,
    )
    effects.append(CueChanged(BehaviorCue.GREETING))
    effects.append(
        RequestUtterance(
            ts=ts,
            purpose="greeting",
            generation=new_state.generation,
            track_id=new_state.engaged_track,
            name=identity.name if identity else None,
        )
    )
    return new_state


def _request_stay(state: EngineState, ts: int, decision: EngagementDecision,
                  effects: list[Effect]) -> EngineState:
    subject = state.engaged_subject
    effects.append(
        _decision_journal(ts, subject, decision, f"Asking {subject} whether they can stay longer.")
    )
    if decision.warning:
        effects.append(_warning_journal(ts, subject, decision.warning))
    new_state = replace(
        state,
        mode=Mode.AWAITING_STAY_ANSWER,
        stay_prompt_issued=True,
        pending_request=True,
    )
    effects.append(
        RequestUtterance(
            ts=ts,
            purpose="stay_prompt",
            generation=new_state.generation,
            track_id=state.engaged_track,
            name=state.engaged_identity.name if state.engaged_identity else None,
        )
    )
    return new_state


def _begin_farewell(state: EngineState, ts: int, decision: EngagementDecision,
                    effects: list[Effect]) -> EngineState:
    subject = state.engaged_subject
    effects.append(
        _decision_journal(ts, subject, decision, f"Winding down with {subject}: {decision.reason}.")
    )
    if decision.warning:
        effects.append(_warning_journal(ts, subject, decision.warning))
    new_state = replace(state, mode=Mode.ENGAGED, ending=True, pending_request=True)
    effects.append(
        RequestUtterance(
            ts=ts,
            purpose="farewell",
            generation=new_state.generation,
            track_id=state.engaged_track,
            name=state.engaged_identity.name if state.engaged_identity else None,
        )
    )
    return new_state


def _on_presence(state, event: PresenceChanged, policy_input, policies, config) -> StepResult:
    effects: list[Effect] = [_presence_journal(event)]
    ev = event.event

    engaged_exit = (
        state.mode != Mode.NOT_ENGAGED
        and ev.track_id == state.engaged_track
        and ev.kind == PresenceEventKind.LEFT_ZONE
    )
    if engaged_exit:
        decision = EngagementDecision(
            Verdict.DISENGAGE, "engaged person left the zone", track_id=ev.track_id
        )
        effects.append(
            _decision_journal(
                event.ts, state.engaged_subject, decision,
                f"Disengaging: {state.engaged_subject} left the zone.",
            )
        )
        new_state = _end_episode(state, event.ts, effects, farewell=False)
        return StepResult(new_state, tuple(effects))

    if state.mode == Mode.NOT_ENGAGED:
        augmented = _augment_window(policy_input, [e for e in effects if isinstance(e, AppendJournal)])
        decision = policies.engagement_check(augmented)
        if decision.verdict == Verdict.ENGAGE and decision.track_id is not None:
            identity = event.identity if decision.track_id == ev.track_id else None
            new_state = _engage(state, event.ts, decision, identity, effects)
            return StepResult(new_state, tuple(effects))
        if decision.warning:
            effects.append(_warning_journal(event.ts, PASSERBY, decision.warning))
    return StepResult(state, tuple(effects))


def _on_speech_started(state: EngineState, event: SpeechStarted) -> StepResult:
    effects: list[Effect] = []
    if state.mode == Mode.NOT_ENGAGED or event.track_id != state.engaged_track:
        return StepResult(state, ())
    new_state = state
    if state.speaking is not None and event.ts < state.speaking.ends:
        new_state = _interrupt_speech(state, event.ts, effects)
    if new_state.cue != BehaviorCue.LISTENING and new_state.speaking is None:
        new_state = replace(new_state, cue=BehaviorCue.LISTENING)
        effects.append(CueChanged(BehaviorCue.LISTENING))
    return StepResult(new_state, tuple(effects))


def _on_user_utterance(
    state, event: UserUtteranceFinalized, policy_input, policies, config
) -> StepResult:
    subject = event.identity.name if event.identity else PASSERBY
    utterance_entry = AppendJournal(
        ts=event.ts,
        kind=EntryKind.UTTERANCE_USER,
        subject=subject,
        structured={
            "speaker": "user",
            "track_id": event.track_id,
            "text": event.text,
            "zone": event.zone.value,
            "started": event.started,
        },
        rendered=render_user_utterance(subject, event.text),
    )
    effects: list[Effect] = [utterance_entry, UtteranceSurfaced("user", event.text, False)]

    if state.mode == Mode.NOT_ENGAGED:
        augmented = _augment_window(policy_input, [utterance_entry])
        decision = policies.engagement_check(augmented)
        if decision.verdict == Verdict.ENGAGE and decision.track_id is not None:
            if decision.track_id == event.track_id:
                identity = event.identity
            else:
                identity = policy_input_identity(policy_input, decision.track_id)
            new_state = _engage(state, event.ts, decision, identity, effects)
            return StepResult(new_state, tuple(effects))
        if decision.warning:
            effects.append(_warning_journal(event.ts, subject, decision.warning))
        return StepResult(state, tuple(effects))

    if event.track_id != state.engaged_track or state.ending:
        return StepResult(state, tuple(effects))

    new_state = state
    if new_state.pending_request and new_state.speaking is None:
        # A newer user utterance supersedes the reply being prepared.
        new_state = replace(
            new_state, generation=new_state.generation + 1, pending_request=False
        )

    check_input = replace(
        _augment_window(policy_input, [utterance_entry]),
        state=new_state,
        last_user_utterance=event.text,
    )
    decision = policies.disengagement_check(check_input)

    if new_state.mode == Mode.AWAITING_STAY_ANSWER:
        if decision.verdict == Verdict.DISENGAGE:
            return StepResult(_begin_farewell(new_state, event.ts, decision, effects), tuple(effects))
        # Any non-decline answer keeps the conversation: reset the trigger.
        accepted = replace(
            new_state,
            mode=Mode.ENGAGED,
            stay_prompt_issued=False,
            stay_base=new_state.turn_count,
            pending_request=True,
        )
        effects.append(
            _decision_journal(
                event.ts, accepted.engaged_subject, decision,
                f"{accepted.engaged_subject} agreed to stay; continuing the conversation.",
            )
        )
        if decision.warning:
            effects.append(_warning_journal(event.ts, subject, decision.warning))
        effects.append(
            RequestUtterance(
                ts=event.ts,
                purpose="reply",
                generation=accepted.generation,
                track_id=event.track_id,
                name=event.identity.name if event.identity else None,
                user_text=event.text,
            )
        )
        return StepResult(accepted, tuple(effects))

    if decision.verdict == Verdict.REQUEST_STAY:
        return StepResult(_request_stay(new_state, event.ts, decision, effects), tuple(effects))
    if decision.verdict == Verdict.DISENGAGE:
        if (
            not new_state.stay_prompt_issued
            and new_state.turn_count - new_state.stay_base > config.turn_limit
        ):
            # Ask before ending: a long conversation always gets the stay prompt first.
            ask = EngagementDecision(
                Verdict.REQUEST_STAY, decision.reason, new_state.engaged_track, decision.warning
            )
            return StepResult(_request_stay(new_state, event.ts, ask, effects), tuple(effects))
        return StepResult(_begin_farewell(new_state, event.ts, decision, effects), tuple(effects))

    if decision.warning:
        effects.append(_warning_journal(event.ts, subject, decision.warning))
    new_state = replace(new_state, pending_request=True)
    effects.append(
        RequestUtterance(
            ts=event.ts,
            purpose="reply",
            generation=new_state.generation,
            track_id=event.track_id,
            name=event.identity.name if event.identity else None,
            user_text=event.text,
        )
    )
    return StepResult(new_state, tuple(effects))


def policy_input_identity(policy_input: PolicyInput, track_id: str) -> PersonIdentity | None:
    for feat in policy_input.features:
        if feat.track_id == track_id:
            return feat.identity
    return None


def _on_agent_ready(state: EngineState, event: AgentUtteranceReady, config) -> StepResult:
    if event.generation != state.generation or state.mode == Mode.NOT_ENGAGED:
        log.debug("discarding stale responder reply (gen %s != %s)", event.generation, state.generation)
        return StepResult(state, ())
    effects: list[Effect] = []
    if event.warning:
        effects.append(_warning_journal(event.ts, state.engaged_subject, event.warning))
    speaking = InFlightSpeech(
        text=event.text,
        purpose=event.purpose,
        started=event.ts,
        ends=event.ts + config.speech_duration_ms(event.text),
        generation=event.generation,
    )
    cue = BehaviorCue.GREETING if event.purpose == "greeting" else BehaviorCue.SPEAKING
    new_state = replace(state, speaking=speaking, pending_request=False, cue=cue)
    effects.append(CueChanged(cue))
    effects.append(UtteranceSurfaced("agent", event.text, interrupted=False))
    return StepResult(new_state, tuple(effects))


def _on_agent_finished(
    state: EngineState, event: AgentSpeechFinished, policy_input, policies, config
) -> StepResult:
    speaking = state.speaking
    if (
        speaking is None
        or event.generation != state.generation
        or speaking.generation != event.generation
    ):
        return StepResult(state, ())
    effects: list[Effect] = [
        AppendJournal(
            ts=event.ts,
            kind=EntryKind.UTTERANCE_AGENT,
            subject=state.engaged_subject,
            structured={
                "speaker": "agent",
                "text": speaking.text,
                "purpose": speaking.purpose,
                "interrupted": False,
                "started": speaking.started,
                "track_id": state.engaged_track,
            },
            rendered=render_agent_utterance(speaking.text, interrupted=False),
        )
    ]
    new_state = replace(state, speaking=None)
    if speaking.purpose == "reply":
        new_state = replace(new_state, turn_count=new_state.turn_count + 1)
    if speaking.purpose == "farewell" and new_state.ending:
        new_state = _end_episode(new_state, event.ts, effects, farewell=True)
        return StepResult(new_state, tuple(effects))

    new_state = replace(new_state, cue=BehaviorCue.LISTENING)
    effects.append(CueChanged(BehaviorCue.LISTENING))

    if speaking.purpose == "reply" and new_state.mode == Mode.ENGAGED and not new_state.ending:
        # A completed exchange pair is a turn completion: run the check now.
        check_input = replace(policy_input, state=new_state, last_user_utterance=None)
        decision = policies.disengagement_check(check_input)
        if decision.verdict == Verdict.REQUEST_STAY:
            new_state = _request_stay(new_state, event.ts, decision, effects)
        elif decision.verdict == Verdict.DISENGAGE:
            if (
                not new_state.stay_prompt_issued
                and new_state.turn_count - new_state.stay_base > config.turn_limit
            ):
                ask = EngagementDecision(
                    Verdict.REQUEST_STAY, decision.reason, new_state.engaged_track,
                    decision.warning,
                )
                new_state = _request_stay(new_state, event.ts, ask, effects)
            else:
                new_state = _begin_farewell(new_state, event.ts, decision, effects)
        elif decision.warning:
            effects.append(_warning_journal(event.ts, new_state.engaged_subject, decision.warning))
    return StepResult(new_state, tuple(effects))


def _on_tick(state, event: PeriodicTick, policy_input, policies, config) -> StepResult:
    effects: list[Effect] = []
    if state.mode == Mode.NOT_ENGAGED:
        decision = policies.engagement_check(policy_input)
        if decision.verdict == Verdict.ENGAGE and decision.track_id is not None:
            identity = policy_input_identity(policy_input, decision.track_id)
            new_state = _engage(state, event.ts, decision, identity, effects)
            return StepResult(new_state, tuple(effects))
        if decision.warning:
            effects.append(_warning_journal(event.ts, PASSERBY, decision.warning))
        return StepResult(state, tuple(effects))

    if state.mode == Mode.AWAITING_STAY_ANSWER or state.ending:
        # Never a silent disengage while waiting for the answer or saying goodbye.
        return StepResult(state, ())
    if state.speaking is not None or state.pending_request:
        return StepResult(state, ())

    decision = policies.disengagement_check(replace(policy_input, state=state))
    if decision.verdict == Verdict.REQUEST_STAY:
        return StepResult(_request_stay(state, event.ts, decision, effects), tuple(effects))
    if decision.verdict == Verdict.DISENGAGE:
        engaged = next(
            (f for f in policy_input.features if f.track_id == state.engaged_track), None
        )
        zone_exit = engaged is None or engaged.zone == Zone.OUTSIDE
        if zone_exit:
            effects.append(
                _decision_journal(
                    event.ts, state.engaged_subject, decision,
                    f"Disengaging: {state.engaged_subject} left the zone.",
                )
            )
            return StepResult(_end_episode(state, event.ts, effects, farewell=False), tuple(effects))
        if (
            not state.stay_prompt_issued
            and state.turn_count - state.stay_base > config.turn_limit
        ):
            ask = EngagementDecision(
                Verdict.REQUEST_STAY, decision.reason, state.engaged_track, decision.warning
            )
            return StepResult(_request_stay(state, event.ts, ask, effects), tuple(effects))
        return StepResult(_begin_farewell(state, event.ts, decision, effects), tuple(effects))
    if decision.warning:
        effects.append(_warning_journal(event.ts, state.engaged_subject, decision.warning))
    return StepResult(state, tuple(effects))
