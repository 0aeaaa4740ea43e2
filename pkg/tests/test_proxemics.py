from __future__ import annotations

import math

import pytest
from hypothesis import given, settings, strategies as st

from hallway_agent import (
    IdentityFuser,
    IdentityRegistry,
    OrderingError,
    PersonIdentity,
    ProxemicObservation,
    TagSighting,
    Zone,
    ZoneConfig,
    classify_zone,
    fuse_identity,
)
from hallway_agent.proxemics import (
    PresenceEventKind,
    PresenceTracker,
    facing_offset_from,
)


def obs(track: str, ts: int, x: float, y: float, facing_offset: float = 0.0) -> ProxemicObservation:
    return ProxemicObservation(
        track_id=track,
        timestamp=ts,
        position=(x, y),
        distance=math.hypot(x, y),
        facing_offset=facing_offset,
    )


class TestClassifyZone:
    def test_two_meters_is_public(self, zones):
        assert classify_zone(2.0, zones) == Zone.PUBLIC

    def test_boundary_belongs_to_outer_zone(self, zones):
        assert classify_zone(1.2, zones) == Zone.PUBLIC
        assert classify_zone(4.5, zones) == Zone.OUTSIDE

    def test_half_meter_is_social(self, zones):
        assert classify_zone(0.5, zones) == Zone.SOCIAL

    def test_negative_distance_rejected(self, zones):
        with pytest.raises(ValueError):
            classify_zone(-0.1, zones)

    @given(st.floats(min_value=0.0, max_value=100.0, allow_nan=False))
    def test_total_over_nonnegative_distances(self, distance):
        assert classify_zone(distance, ZoneConfig()) in (Zone.SOCIAL, Zone.PUBLIC, Zone.OUTSIDE)

    @given(
        st.floats(min_value=0.0, max_value=100.0, allow_nan=False),
        st.floats(min_value=0.0, max_value=100.0, allow_nan=False),
    )
    def test_monotone_outward(self, a, b):
        # Increasing distance never moves the classification inward.
        rank = {Zone.SOCIAL: 0, Zone.PUBLIC: 1, Zone.OUTSIDE: 2}
        lo, hi = min(a, b), max(a, b)
        cfg = ZoneConfig()
        assert rank[classify_zone(lo, cfg)] <= rank[classify_zone(hi, cfg)]


class TestObservation:
    def test_distance_must_match_position(self):
        with pytest.raises(ValueError):
            ProxemicObservation(
                track_id="t", timestamp=0, position=(3.0, 4.0), distance=4.0,
                facing_offset=0.0,
            )

    def test_facing_offset_bounds(self):
        with pytest.raises(ValueError):
            ProxemicObservation(
                track_id="t", timestamp=0, position=(1.0, 0.0), distance=1.0,
                facing_offset=181.0,
            )

    def test_from_pose_derives_distance_and_facing(self):
        o = ProxemicObservation.from_pose("t", 0, 0.0, 2.0, 270.0)
        assert o.distance == pytest.approx(2.0)
        assert o.facing_offset == pytest.approx(0.0)

    def test_facing_offset_folds_to_half_circle(self):
        # Standing on +x, looking along +x: facing directly away.
        assert facing_offset_from((2.0, 0.0), 0.0) == pytest.approx(180.0)
        assert facing_offset_from((2.0, 0.0), 180.0) == pytest.approx(0.0)
        assert facing_offset_from((2.0, 0.0), 90.0) == pytest.approx(90.0)


class TestFuseIdentity:
    def test_single_candidate(self, registry):
        associations = fuse_identity(
            [obs("t1", 100, 0.0, 2.0)],
            [TagSighting("T-jack", 200, True)],
            registry,
        )
        assert associations == {"t1": registry.get("T-jack")}

    def test_two_candidates_nearest_wins(self, registry):
        # Independent oracle: enumerate both assignments and pick the nearer track.
        candidates = {"a": 1.0, "b": 3.0}
        expected = min(candidates, key=lambda t: (candidates[t], t))
        associations = fuse_identity(
            [obs("a", 100, 0.0, 1.0), obs("b", 150, 0.0, 3.0)],
            [TagSighting("T-jack", 200, True)],
            registry,
        )
        assert set(associations) == {expected}

    def test_no_candidate_defers_until_track_appears(self, registry):
        fuser = IdentityFuser(registry, window_ms=500)
        assert fuser.sight(TagSighting("T-jack", 100, True)) is None
        assert fuser.associations() == {}
        fuser.observe(obs("t9", 5000, 0.0, 1.0))
        assert fuser.identity_for("t9").name == "Jack"

    def test_unregistered_tag_dropped_with_error(self, registry):
        fuser = IdentityFuser(registry)
        error = fuser.sight(TagSighting("T-nobody", 100, True))
        assert "unregistered" in error
        assert fuser.associations() == {}

    def test_tag_absent_dissolves_association(self, registry):
        fuser = IdentityFuser(registry)
        fuser.observe(obs("t1", 100, 0.0, 1.0))
        fuser.sight(TagSighting("T-jack", 150, True))
        assert fuser.identity_for("t1") is not None
        fuser.sight(TagSighting("T-jack", 300, False))
        assert fuser.identity_for("t1") is None

    def test_track_release_repends_tag(self, registry):
        fuser = IdentityFuser(registry)
        fuser.observe(obs("t1", 100, 0.0, 1.0))
        fuser.sight(TagSighting("T-jack", 150, True))
        fuser.release_track("t1")
        assert fuser.identity_for("t1") is None
        fuser.observe(obs("t2", 500, 0.0, 2.0))
        assert fuser.identity_for("t2").name == "Jack"

    def test_stale_observation_outside_window_not_matched(self, registry):
        fuser = IdentityFuser(registry, window_ms=500)
        fuser.observe(obs("t1", 100, 0.0, 1.0))
        fuser.sight(TagSighting("T-jack", 5000, True))
        assert fuser.identity_for("t1") is None  # pending instead

    @given(st.data())
    @settings(max_examples=200, deadline=None)
    def test_association_always_bijective(self, data):
        registry = IdentityRegistry(
            [PersonIdentity(tag_id=f"T{i}", name=f"P{i}") for i in range(4)]
        )
        fuser = IdentityFuser(registry, window_ms=1000)
        ts = 0
        for _ in range(data.draw(st.integers(min_value=1, max_value=30))):
            ts += data.draw(st.integers(min_value=1, max_value=500))
            if data.draw(st.booleans()):
                track = data.draw(st.sampled_from(["a", "b", "c"]))
                d = data.draw(st.floats(min_value=0.1, max_value=6.0, allow_nan=False))
                fuser.observe(obs(track, ts, 0.0, d))
                ts += 1
            else:
                tag_id = data.draw(st.sampled_from(["T0", "T1", "T2", "T3"]))
                fuser.sight(TagSighting(tag_id, ts, data.draw(st.booleans())))
            tags = list(fuser._tag_by_track.values())
            tracks = list(fuser._track_by_tag.values())
            assert len(tags) == len(set(tags))
            assert len(tracks) == len(set(tracks))
            assert set(fuser._tag_by_track) == set(tracks)


def _reference_single_track(trace: list[tuple[int, float] | tuple[int, None]],
                            zones: ZoneConfig, timeout_ms: int) -> list[str]:
    """Independent single-track oracle: classify each sample, emit transitions,
    and emit a timeout exit when a gap exceeds the timeout."""
    events = []
    zone = "outside"
    last_ts = None
    for ts, distance in trace:
        if distance is None:  # probe point: check timeout only
            if last_ts is not None and zone != "outside" and ts - last_ts >= timeout_ms:
                events.append("left_zone")
                zone = "outside"
                last_ts = None
            continue
        if last_ts is not None and zone != "outside" and ts - last_ts >= timeout_ms:
            events.append("left_zone")
            zone = "outside"
        new_zone = (
            "social" if distance < zones.social_max
            else "public" if distance < zones.public_max
            else "outside"
        )
        if zone == "outside" and new_zone != "outside":
            events.append("entered_zone")
        elif zone != "outside" and new_zone == "outside":
            events.append("left_zone")
        elif zone != new_zone:
            events.append("moved_zone")
        zone = new_zone
        last_ts = ts
    return events


class TestPresenceTracker:
    def test_appearance_at_two_meters_enters_public(self, zones):
        tracker = PresenceTracker(zones)
        events = tracker.observe(obs("t1", 0, 0.0, 2.0))
        assert [e.kind for e in events] == [PresenceEventKind.ENTERED_ZONE]
        assert events[0].zone == Zone.PUBLIC

    def test_move_inward_emits_moved_zone(self, zones):
        tracker = PresenceTracker(zones)
        tracker.observe(obs("t1", 0, 0.0, 2.0))
        events = tracker.observe(obs("t1", 1000, 0.0, 0.9))
        assert [e.kind for e in events] == [PresenceEventKind.MOVED_ZONE]
        assert events[0].zone == Zone.SOCIAL

    def test_timeout_matches_reference_simulator(self, zones):
        trace = [(0, 2.0), (1000, 2.0), (4500, None)]
        expected = _reference_single_track(trace, zones, 3000)
        tracker = PresenceTracker(zones, timeout_ms=3000)
        got = []
        for ts, distance in trace:
            if distance is None:
                got += [e.kind.value for e in tracker.expire(ts)]
            else:
                got += [e.kind.value for e in tracker.observe(obs("t1", ts, 0.0, distance))]
        assert got == expected == ["entered_zone", "left_zone"]

    def test_facing_changed_emitted_on_tolerance_crossing(self, zones):
        tracker = PresenceTracker(zones)
        tracker.observe(obs("t1", 0, 0.0, 2.0, facing_offset=10.0))
        events = tracker.observe(obs("t1", 500, 0.0, 2.0, facing_offset=120.0))
        assert [e.kind for e in events] == [PresenceEventKind.FACING_CHANGED]
        assert events[0].facing is False

    def test_out_of_order_observation_rejected(self, zones):
        tracker = PresenceTracker(zones)
        tracker.observe(obs("t1", 1000, 0.0, 2.0))
        with pytest.raises(OrderingError):
            tracker.observe(obs("t1", 1000, 0.0, 1.9))

    def test_dwell_tracks_social_facing_spans(self, zones):
        tracker = PresenceTracker(zones)
        tracker.observe(obs("t1", 0, 0.0, 0.9, facing_offset=10.0))
        assert tracker.features(2500)[0].dwell_ms == 2500
        tracker.observe(obs("t1", 3000, 0.0, 0.9, facing_offset=120.0))
        assert tracker.features(3000)[0].dwell_ms == 0

    @given(st.lists(
        st.tuples(
            st.integers(min_value=1, max_value=2000),
            st.floats(min_value=0.05, max_value=8.0, allow_nan=False),
        ),
        min_size=1, max_size=40,
    ))
    @settings(max_examples=200, deadline=None)
    def test_every_entry_matched_by_one_exit(self, deltas):
        zones = ZoneConfig()
        tracker = PresenceTracker(zones, timeout_ms=3000)
        ts = 0
        kinds = []
        for delta, distance in deltas:
            ts += delta
            kinds += [e.kind for e in tracker.expire(ts)]
            kinds += [e.kind for e in tracker.observe(obs("t1", ts, 0.0, distance))]
        kinds += [e.kind for e in tracker.expire(ts + 10_000)]
        depth = 0
        for kind in kinds:
            if kind == PresenceEventKind.ENTERED_ZONE:
                assert depth == 0
                depth += 1
            elif kind == PresenceEventKind.LEFT_ZONE:
                assert depth == 1
                depth -= 1
        assert depth == 0
