"""Shared scenario-building utilities for the test suite."""

from __future__ import annotations

import random
from pathlib import Path
from typing import Any

from hallway_agent import (
    EngineConfig,
    PersonIdentity,
    ResponderSettings,
    Scenario,
    Topic,
)

REPO_ROOT = Path(__file__).resolve().parents[1]

SCRIPT = (
    "Oh, hi! Good to see someone out here.",
    "I made a little pottery piece at the class yesterday, what do you think of it?",
    "Ha, glazing it was the hard part.",
    "How has your week been going?",
    "That sounds busy, but in a good way.",
    "I keep meaning to take a proper lunch break myself.",
    "Tell me more, I have nothing but time and this book.",
    "That's a fair point, honestly.",
    "I'll pretend I knew that all along.",
    "Same time tomorrow, maybe?",
    "Honestly, the hallway has been quiet today.",
    "You should see the other sketches I have back here.",
)

USER_LINES = (
    "hey, good to see you",
    "I heard you made some pottery yesterday",
    "the glaze came out really nice",
    "my week has been pretty packed",
    "mostly the demo, it ate every afternoon",
    "ha, I will hold you to that",
    "we should compare notes sometime",
    "the hallway is freezing today",
    "did you catch the talk at noon",
)

DECLINES = (
    "no, I gotta run, bye!",
    "sorry, can't stay, lots to do",
    "nah, I should head out",
)

ACCEPTS = (
    "sure, I have a few minutes",
    "yeah of course, happy to stay",
)


def make_config(**overrides: Any) -> EngineConfig:
    defaults: dict[str, Any] = dict(
        responder=ResponderSettings(script=SCRIPT),
        topics=(
            Topic("Pottery", "You want to ask what people think of the pottery you made."),
            Topic("Lunch", "You are picking a lunch spot for tomorrow."),
        ),
    )
    defaults.update(overrides)
    return EngineConfig(**defaults)


def move(track: str, at: int, x: float, y: float, facing: float = 270.0) -> dict:
    return {"at": at, "type": "move", "track_id": track, "x": x, "y": y, "facing_deg": facing}


def say(track: str, at: int, text: str, final: bool = True) -> dict:
    return {"at": at, "type": "speech", "track_id": track, "text": text, "final": final}


def tag(tag_id: str, at: int, present: bool = True) -> dict:
    return {"at": at, "type": "tag", "tag_id": tag_id, "present": present}


def tick(at: int) -> dict:
    return {"at": at, "type": "control", "action": "tick"}


def keepalives(track: str, x: float, y: float, start: int, end: int,
               step: int = 1900, facing: float = 270.0) -> list[dict]:
    return [move(track, t, x, y, facing) for t in range(start, end, step)]


def random_episode(seed: int) -> tuple[Scenario, dict[str, Any]]:
    """One randomized scripted episode for the turn-limit property.

    The visitor approaches (by proximity or by speaking), chats for a random
    number of turns, and either declines the stay prompt or leaves the zone,
    possibly mid-conversation. Stay-prompt acceptance is exercised by the
    dedicated re-arm tests, so "exactly one prompt" is assertable here.
    """
    rng = random.Random(seed)
    tagged = rng.random() < 0.5
    identities: tuple[PersonIdentity, ...] = ()
    timeline: list[dict] = []
    track = "tv"
    if tagged:
        identities = (PersonIdentity(tag_id="T-v", name="Vern", context_key=None),)
        timeline.append(tag("T-v", 0))

    by_speech = rng.random() < 0.4
    if by_speech:
        # Linger in the public band and open with a greeting.
        x, y = 0.0, round(rng.uniform(1.5, 4.0), 2)
        timeline.append(move(track, 200, x, y))
        timeline.append(say(track, 1000, "hello over there"))
        engage_at = 1000
    else:
        x, y = 0.0, round(rng.uniform(0.3, 1.1), 2)
        timeline.append(move(track, 200, 0.0, 2.0))
        timeline.append(move(track, 1000, x, y))
        engage_at = 3000  # dwell default 2000 from the 1000 ms approach

    target_turns = rng.randint(0, 9)
    prompt_expected = target_turns > 5
    turn_times = []
    t = engage_at + 3000 + rng.randint(0, 900)
    for _ in range(min(target_turns, 6)):
        turn_times.append(t)
        t += 6000 + rng.randint(0, 900)

    cut_turns = None
    if prompt_expected:
        ending = rng.choice(("decline", "exit_after_prompt"))
    else:
        ending = "exit"
        if target_turns >= 2 and rng.random() < 0.4:
            cut_turns = rng.randint(1, target_turns - 1)
            turn_times = turn_times[:cut_turns]

    for i, at in enumerate(turn_times):
        timeline.append(say(track, at, USER_LINES[i % len(USER_LINES)]))

    last_turn = turn_times[-1] if turn_times else engage_at
    if ending == "decline":
        answer_at = last_turn + 8000
        timeline.append(say(track, answer_at, rng.choice(DECLINES)))
        horizon = answer_at
        timeline += keepalives(track, x, y, 1000, horizon + 1, 1900)
        timeline.append(tick(horizon + 12000))
    elif ending == "exit_after_prompt":
        # Walk away without answering: the prompt resolves by zone exit.
        leave_at = last_turn + 9000
        timeline += keepalives(track, x, y, 1000, leave_at - 500, 1900)
        timeline.append(move(track, leave_at, 6.0, 0.0, facing=90.0))
        timeline.append(tick(leave_at + 12000))
    else:
        leave_at = last_turn + 4500 + rng.randint(0, 800)
        silent = rng.random() < 0.5
        if silent:
            timeline += keepalives(track, x, y, 1000, leave_at, 1900)
            timeline.append(tick(leave_at + 12000))
        else:
            timeline += keepalives(track, x, y, 1000, leave_at - 500, 1900)
            timeline.append(move(track, leave_at, 6.0, 0.0, facing=90.0))
            timeline.append(tick(leave_at + 12000))

    timeline.sort(key=lambda e: e["at"])
    scenario = Scenario(
        name=f"episode-{seed}",
        seed=seed,
        identities=identities,
        timeline=tuple(timeline),
    )
    meta = {
        "tagged": tagged,
        "by_speech": by_speech,
        "target_turns": target_turns,
        "ending": ending,
    }
    return scenario, meta


def reply_entries(record) -> list[dict]:
    return [
        e for e in record.journal
        if e["kind"] == "utterance_agent" and e["structured"].get("purpose") == "reply"
    ]


def stay_prompt_entries(record) -> list[dict]:
    from hallway_agent import STAY_PROMPT

    return [
        e for e in record.journal
        if e["kind"] == "utterance_agent" and e["structured"].get("text") == STAY_PROMPT
    ]


def policy_disengage_entries(record) -> list[dict]:
    """Decision entries that end an episode for a reason other than zone exit."""
    return [
        e for e in record.journal
        if e["kind"] == "decision"
        and e["structured"].get("verdict") == "DISENGAGE"
        and e["structured"].get("reason") != "engaged person left the zone"
    ]
