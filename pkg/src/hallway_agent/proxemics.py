"""Sensed-world model: tracked bodies, identity-tag fusion, and proxemic zones.

The agent sits at the origin of a planar coordinate frame. Clients (or the
simulator) report body positions and absolute facing angles; distance and
facing offset toward the agent are derived here. All consumers see a single
totally ordered stream of observations and sightings, so every structure in
this module is deterministic given that order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .config import ZoneConfig
from .errors import OrderingError

log = logging.getLogger(__name__)

DISTANCE_TOLERANCE = 1e-9


class Zone(str, Enum):
    SOCIAL = "social"
    PUBLIC = "public"
    OUTSIDE = "outside"


def classify_zone(distance: float, config: ZoneConfig) -> Zone:
    """Map a distance in meters onto a zone band.

    Intervals are half-open; a boundary value belongs to the outer zone.
    """
    if distance < 0:
        raise ValueError(f"distance must be >= 0, got {distance}")
    if distance < config.social_max:
        return Zone.SOCIAL
    if distance < config.public_max:
        return Zone.PUBLIC
    return Zone.OUTSIDE


def facing_offset_from(position: tuple[float, float], facing_deg: float) -> float:
    """Angular deviation in [0, 180] between a body's facing and the direction to the agent."""
    x, y = position
    if x == 0.0 and y == 0.0:
        return 0.0
    toward_agent = math.degrees(math.atan2(-y, -x))
    delta = (facing_deg - toward_agent) % 360.0
    if delta > 180.0:
        delta = 360.0 - delta
    return abs(delta)


@dataclass(frozen=True)
class ProxemicObservation:
    """One timestamped sighting of a tracked body."""

    track_id: str
    timestamp: int
    position: tuple[float, float]
    distance: float
    facing_offset: float

    def __post_init__(self):
        norm = math.hypot(*self.position)
        if abs(norm - self.distance) > DISTANCE_TOLERANCE:
            raise ValueError(
                f"distance {self.distance} does not match position norm {norm}"
            )
        if not (0.0 <= self.facing_offset <= 180.0):
            raise ValueError(f"facing_offset must be in [0, 180], got {self.facing_offset}")

    @classmethod
    def from_pose(
        cls, track_id: str, timestamp: int, x: float, y: float, facing_deg: float
    ) -> "ProxemicObservation":
        """Build an observation from raw client pose data (position + absolute facing)."""
        return cls(
            track_id=track_id,
            timestamp=timestamp,
            position=(x, y),
            distance=math.hypot(x, y),
            facing_offset=facing_offset_from((x, y), facing_deg),
        )


@dataclass(frozen=True)
class TagSighting:
    """An identity tag entering or leaving receiver range."""

    tag_id: str
    timestamp: int
    present: bool


@dataclass(frozen=True)
class PersonIdentity:
    """A registered tag wearer. ``context_key`` indexes the relationship context, when listed."""

    tag_id: str
    name: str
    context_key: str | None = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("identity name must be nonempty")

    @property
    def memory_key(self) -> str:
        return self.context_key or self.name


class IdentityRegistry:
    """tag_id -> PersonIdentity lookup with uniqueness enforcement."""

    def __init__(self, identities: Iterable[PersonIdentity] = ()):
        self._by_tag: dict[str, PersonIdentity] = {}
        for identity in identities:
            self.add(identity)

    def add(self, identity: PersonIdentity) -> None:
        if identity.tag_id in self._by_tag:
            raise ValueError(f"duplicate tag_id in registry: {identity.tag_id}")
        self._by_tag[identity.tag_id] = identity

    def get(self, tag_id: str) -> PersonIdentity | None:
        return self._by_tag.get(tag_id)

    def names(self) -> list[str]:
        return [i.name for i in self._by_tag.values()]

    def __contains__(self, tag_id: str) -> bool:
        return tag_id in self._by_tag

    def __len__(self) -> int:
        return len(self._by_tag)


class PresenceEventKind(str, Enum):
    ENTERED_ZONE = "entered_zone"
    MOVED_ZONE = "moved_zone"
    LEFT_ZONE = "left_zone"
    FACING_CHANGED = "facing_changed"


@dataclass(frozen=True)
class PresenceEvent:
    kind: PresenceEventKind
    track_id: str
    timestamp: int
    zone: Zone
    distance: float
    facing: bool
    facing_offset: float


@dataclass
class TrackFeatures:
    """Per-track snapshot handed to engagement policies."""

    track_id: str
    zone: Zone
    distance: float
    facing_offset: float
    facing: bool
    dwell_ms: int
    identity: PersonIdentity | None = None


@dataclass
class _TrackState:
    last_obs: ProxemicObservation
    zone: Zone
    facing: bool
    social_facing_since: int | None = None


class PresenceTracker:
    """Turns raw observations into zone/facing transition events.

    A track with no observation for ``timeout_ms`` is expired with a synthetic
    ``left_zone`` event. Dwell (continuous social-zone facing time) is tracked
    per body for the engagement policy.
    """

    def __init__(self, config: ZoneConfig, timeout_ms: int = 3000):
        self.config = config
        self.timeout_ms = timeout_ms
        self._tracks: dict[str, _TrackState] = {}

    def observe(self, obs: ProxemicObservation) -> list[PresenceEvent]:
        state = self._tracks.get(obs.track_id)
        if state is not None and obs.timestamp <= state.last_obs.timestamp:
            raise OrderingError(
                f"observation for track {obs.track_id} at {obs.timestamp} is not after "
                f"{state.last_obs.timestamp}"
            )
        zone = classify_zone(obs.distance, self.config)
        facing = obs.facing_offset <= self.config.facing_tolerance
        events: list[PresenceEvent] = []

        prev_zone = state.zone if state is not None else Zone.OUTSIDE
        prev_facing = state.facing if state is not None else facing

        if prev_zone == Zone.OUTSIDE and zone != Zone.OUTSIDE:
            events.append(self._event(PresenceEventKind.ENTERED_ZONE, obs, zone, facing))
        elif prev_zone != Zone.OUTSIDE and zone == Zone.OUTSIDE:
            events.append(self._event(PresenceEventKind.LEFT_ZONE, obs, zone, facing))
        elif prev_zone != zone:
            events.append(self._event(PresenceEventKind.MOVED_ZONE, obs, zone, facing))
        elif facing != prev_facing and zone != Zone.OUTSIDE:
            events.append(self._event(PresenceEventKind.FACING_CHANGED, obs, zone, facing))

        if state is None:
            state = _TrackState(last_obs=obs, zone=zone, facing=facing)
            self._tracks[obs.track_id] = state
        else:
            state.last_obs = obs
            state.zone = zone
            state.facing = facing

        if zone == Zone.SOCIAL and facing:
            if state.social_facing_since is None:
                state.social_facing_since = obs.timestamp
        else:
            state.social_facing_since = None
        return events

    def expire(self, now: int) -> list[PresenceEvent]:
        """Emit left_zone for tracks silent longer than the timeout, and drop them."""
        events: list[PresenceEvent] = []
        for track_id in sorted(self._tracks):
            state = self._tracks[track_id]
            if now - state.last_obs.timestamp >= self.timeout_ms:
                if state.zone != Zone.OUTSIDE:
                    events.append(
                        PresenceEvent(
                            kind=PresenceEventKind.LEFT_ZONE,
                            track_id=track_id,
                            timestamp=now,
                            zone=Zone.OUTSIDE,
                            distance=state.last_obs.distance,
                            facing=False,
                            facing_offset=state.last_obs.facing_offset,
                        )
                    )
                del self._tracks[track_id]
        return events

    def drop(self, track_id: str) -> None:
        self._tracks.pop(track_id, None)

    def next_timeout_deadline(self) -> int | None:
        if not self._tracks:
            return None
        return min(s.last_obs.timestamp for s in self._tracks.values()) + self.timeout_ms

    def dwell_deadline(self, track_id: str, dwell_to_engage: int) -> int | None:
        state = self._tracks.get(track_id)
        if state is None or state.social_facing_since is None:
            return None
        return state.social_facing_since + dwell_to_engage

    def reset_dwell(self, track_id: str, now: int) -> None:
        """Re-arm the dwell clock (an ended episode consumed the approach intent)."""
        state = self._tracks.get(track_id)
        if state is not None and state.social_facing_since is not None:
            state.social_facing_since = now

    def zone_of(self, track_id: str) -> Zone:
        state = self._tracks.get(track_id)
        return state.zone if state is not None else Zone.OUTSIDE

    def features(self, now: int) -> list[TrackFeatures]:
        out = []
        for track_id in sorted(self._tracks):
            state = self._tracks[track_id]
            dwell = 0
            if state.social_facing_since is not None:
                dwell = max(0, now - state.social_facing_since)
            out.append(
                TrackFeatures(
                    track_id=track_id,
                    zone=state.zone,
                    distance=state.last_obs.distance,
                    facing_offset=state.last_obs.facing_offset,
                    facing=state.facing,
                    dwell_ms=dwell,
                )
            )
        return out

    def active_tracks(self) -> list[str]:
        return sorted(self._tracks)

    def _event(
        self, kind: PresenceEventKind, obs: ProxemicObservation, zone: Zone, facing: bool
    ) -> PresenceEvent:
        return PresenceEvent(
            kind=kind,
            track_id=obs.track_id,
            timestamp=obs.timestamp,
            zone=zone,
            distance=obs.distance,
            facing=facing,
            facing_offset=obs.facing_offset,
        )


@dataclass
class _PendingTag:
    tag_id: str
    sighted_at: int


class IdentityFuser:
    """Associates present tags with tracked bodies.

    Rule: a newly present tag binds to the unassociated track whose most recent
    observation (within the window) is nearest the receiver at the origin; ties
    break to the lower track id. With no candidate the tag stays pending and
    binds to the next track that reports a position. Associations dissolve when
    the tag leaves receiver range or the track exits, and the map stays
    one-to-one in both directions.
    """

    def __init__(self, registry: IdentityRegistry, window_ms: int = 1000):
        self.registry = registry
        self.window_ms = window_ms
        self._tag_by_track: dict[str, str] = {}
        self._track_by_tag: dict[str, str] = {}
        self._pending: dict[str, _PendingTag] = {}
        self._last_obs: dict[str, ProxemicObservation] = {}

    def observe(self, obs: ProxemicObservation) -> None:
        self._last_obs[obs.track_id] = obs
        if self._pending and obs.track_id not in self._tag_by_track:
            # Earliest-sighted pending tag claims the newly available track.
            tag_id = min(self._pending, key=lambda t: (self._pending[t].sighted_at, t))
            del self._pending[tag_id]
            self._bind(tag_id, obs.track_id)

    def sight(self, sighting: TagSighting) -> str | None:
        """Process one tag sighting. Returns an error string for unregistered tags."""
        if sighting.tag_id not in self.registry:
            log.warning("dropping sighting for unregistered tag %s", sighting.tag_id)
            return f"unregistered tag: {sighting.tag_id}"
        if not sighting.present:
            self._pending.pop(sighting.tag_id, None)
            track = self._track_by_tag.pop(sighting.tag_id, None)
            if track is not None:
                self._tag_by_track.pop(track, None)
            return None
        if sighting.tag_id in self._track_by_tag or sighting.tag_id in self._pending:
            return None
        candidates = [
            obs
            for track, obs in self._last_obs.items()
            if track not in self._tag_by_track
            and sighting.timestamp - obs.timestamp <= self.window_ms
        ]
        if not candidates:
            self._pending[sighting.tag_id] = _PendingTag(sighting.tag_id, sighting.timestamp)
            return None
        best = min(candidates, key=lambda o: (o.distance, o.track_id))
        self._bind(sighting.tag_id, best.track_id)
        return None

    def _bind(self, tag_id: str, track_id: str) -> None:
        self._tag_by_track[track_id] = tag_id
        self._track_by_tag[tag_id] = track_id

    def release_track(self, track_id: str) -> None:
        """Track exited: dissolve its association. A still-present tag re-pends."""
        self._last_obs.pop(track_id, None)
        tag = self._tag_by_track.pop(track_id, None)
        if tag is not None:
            self._track_by_tag.pop(tag, None)
            self._pending[tag] = _PendingTag(tag, sighted_at=0)

    def identity_for(self, track_id: str) -> PersonIdentity | None:
        tag = self._tag_by_track.get(track_id)
        return self.registry.get(tag) if tag is not None else None

    def associations(self) -> dict[str, PersonIdentity]:
        return {
            track: self.registry.get(tag)
            for track, tag in self._tag_by_track.items()
            if self.registry.get(tag) is not None
        }


def fuse_identity(
    track_observations: Sequence[ProxemicObservation],
    tag_sightings: Sequence[TagSighting],
    registry: IdentityRegistry,
    window: int = 1000,
) -> dict[str, PersonIdentity]:
    """Replay interleaved observations and sightings; return the final association map.

    Events are merged by timestamp (observations first on ties, matching the
    sensing pipeline where positions land before tag edges).
    """
    fuser = IdentityFuser(registry, window_ms=window)
    merged: list[tuple[int, int, object]] = []
    for obs in track_observations:
        merged.append((obs.timestamp, 0, obs))
    for sighting in tag_sightings:
        merged.append((sighting.timestamp, 1, sighting))
    merged.sort(key=lambda item: (item[0], item[1]))
    for _, _, event in merged:
        if isinstance(event, ProxemicObservation):
            fuser.observe(event)
        else:
            fuser.sight(event)  # type: ignore[arg-type]
    return fuser.associations()
