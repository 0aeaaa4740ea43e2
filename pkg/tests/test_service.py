from __future__ import annotations

import json
import time

import pytest
from fastapi.testclient import TestClient

from hallway_agent import Scenario
from hallway_agent.service import create_app

from helpers import REPO_ROOT, make_config


@pytest.fixture
def lockstep_client():
    app = create_app(make_config(), mode="lockstep")
    with TestClient(app) as client:
        yield client


@pytest.fixture
def live_client():
    app = create_app(make_config(), mode="live")
    with TestClient(app) as client:
        yield client


def drain_until(ws, predicate, limit=50):
    """Read broadcasts until one matches; returns (match, everything read)."""
    seen = []
    for _ in range(limit):
        message = ws.receive_json()
        seen.append(message)
        if predicate(message):
            return message, seen
    raise AssertionError(f"no matching message in {limit}; saw {seen}")


def consume_fresh_snapshot(ws):
    """A fresh gateway greets each client with its state plus the engine-start line."""
    state = ws.receive_json()
    assert state["type"] == "state"
    entry = ws.receive_json()
    assert entry["type"] == "journal"
    return state


class TestRest:
    def test_health(self, lockstep_client):
        body = lockstep_client.get("/health").json()
        assert body["status"] == "ok"
        assert body["mode"] == "lockstep"

    def test_config_exposes_zone_thresholds(self, lockstep_client):
        body = lockstep_client.get("/config").json()
        assert body["zones"]["social_max"] == 1.2
        assert body["zones"]["public_max"] == 4.5

    def test_ui_mount_serves_built_client_when_present(self, tmp_path):
        (tmp_path / "index.html").write_text("<html>ui</html>")
        app = create_app(make_config(), mode="lockstep", ui_dir=str(tmp_path))
        with TestClient(app) as client:
            response = client.get("/ui/")
            assert response.status_code == 200
            assert "ui" in response.text

    def test_state_snapshot(self, lockstep_client):
        body = lockstep_client.get("/state").json()
        assert body["mode"] == "NotEngaged"
        assert body["behavior_cue"] == "idle_reading"

    def test_validate_context_accepts_reference_document(self, lockstep_client, context_doc):
        body = lockstep_client.post(
            "/context/validate", json={"document": context_doc}
        ).json()
        assert body == {
            "valid": True, "error": None, "field": None, "relationship_count": 2,
        }

    def test_validate_context_reports_missing_field(self, lockstep_client, context_doc):
        del context_doc["Background"]
        body = lockstep_client.post(
            "/context/validate", json={"document": context_doc}
        ).json()
        assert body["valid"] is False
        assert body["field"] == "Background"

    def test_run_and_replay_round_trip(self, lockstep_client):
        scenario = Scenario.load(REPO_ROOT / "scenarios" / "passerby_pause.json")
        run_body = lockstep_client.post(
            "/scenario/run",
            json={"scenario": scenario.to_dict(), "config": make_config().to_dict()},
        ).json()
        record = run_body["record"]
        assert record["journal"]
        replay_body = lockstep_client.post("/replay", json={"record": record}).json()
        assert replay_body["passed"] is True

    def test_run_rejects_malformed_scenario(self, lockstep_client):
        response = lockstep_client.post(
            "/scenario/run", json={"scenario": {"name": "x", "timeline": [{"at": 0}]}}
        )
        assert response.status_code == 422


class TestWireProtocol:
    def test_move_broadcasts_state_with_zone(self, lockstep_client):
        with lockstep_client.websocket_connect("/ws") as ws:
            consume_fresh_snapshot(ws)
            ws.send_json({"type": "move", "track_id": "t1", "x": 0.5, "y": 0.5,
                          "facing_deg": 225.0, "ts": 100})
            state, _ = drain_until(ws, lambda m: m["type"] == "state" and m["tracks"])
            track = state["tracks"][0]
            assert track["zone"] == "social"
            assert abs(track["distance"] - 0.7071) < 1e-3

    def test_malformed_message_gets_error_reply_and_no_state_change(self, lockstep_client):
        with lockstep_client.websocket_connect("/ws") as ws:
            consume_fresh_snapshot(ws)
            ws.send_json({"type": "move", "x": "not a number"})
            reply = ws.receive_json()
            assert reply["type"] == "error"
            assert reply["code"] == "schema"
        assert lockstep_client.get("/state").json()["tracks"] == []

    def test_lockstep_requires_timestamps(self, lockstep_client):
        with lockstep_client.websocket_connect("/ws") as ws:
            consume_fresh_snapshot(ws)
            ws.send_json({"type": "speech", "track_id": "t1", "text": "hi", "final": True})
            reply = ws.receive_json()
            assert reply["type"] == "error"
            assert "ts" in reply["detail"]

    def test_two_clients_receive_identical_sequences(self, lockstep_client):
        with lockstep_client.websocket_connect("/ws") as a, \
                lockstep_client.websocket_connect("/ws") as b:
            consume_fresh_snapshot(a)
            consume_fresh_snapshot(b)
            moves = [
                {"type": "move", "track_id": "t1", "x": 0.0, "y": 2.0,
                 "facing_deg": 270.0, "ts": 100},
                {"type": "speech", "track_id": "t1", "text": "hello there",
                 "final": True, "ts": 1000},
                {"type": "move", "track_id": "t1", "x": 0.0, "y": 0.9,
                 "facing_deg": 270.0, "ts": 1500},
            ]
            for message in moves:
                a.send_json(message)
            _, seen_a = drain_until(
                a, lambda m: m["type"] == "state" and m.get("mode") == "Engaged", limit=80
            )
            seen_b = [b.receive_json() for _ in seen_a]
            assert seen_a == seen_b

    def test_reconnect_restores_identical_view(self, lockstep_client):
        with lockstep_client.websocket_connect("/ws") as ws:
            consume_fresh_snapshot(ws)
            ws.send_json({"type": "move", "track_id": "t1", "x": 0.0, "y": 2.0,
                          "facing_deg": 270.0, "ts": 100})
            drain_until(ws, lambda m: m["type"] == "state" and m["tracks"])
        gateway = lockstep_client.app.state.gateway
        expected = gateway.runtime.snapshot_messages()
        with lockstep_client.websocket_connect("/ws") as ws:
            snapshot = [ws.receive_json() for _ in expected]
            assert snapshot == expected

    def test_live_mode_loop_latency_under_200ms(self, live_client):
        with live_client.websocket_connect("/ws") as ws:
            consume_fresh_snapshot(ws)
            started = time.monotonic()
            ws.send_json({"type": "move", "track_id": "t1", "x": 0.0, "y": 2.0,
                          "facing_deg": 270.0})
            journal, _ = drain_until(ws, lambda m: m["type"] == "journal")
            elapsed = time.monotonic() - started
            assert "has entered the zone" in journal["entry"]["rendered"]
            assert elapsed < 0.2

    def test_rapid_live_moves_never_collide_on_timestamps(self, live_client):
        with live_client.websocket_connect("/ws") as ws:
            consume_fresh_snapshot(ws)
            for i in range(8):
                ws.send_json({"type": "move", "track_id": "t1",
                              "x": 0.0, "y": 3.0 - i * 0.1, "facing_deg": 270.0})
            state, seen = drain_until(
                ws,
                lambda m: m["type"] == "state"
                and m["tracks"]
                and abs(m["tracks"][0]["distance"] - 2.3) < 1e-6,
                limit=80,
            )
            assert not [m for m in seen if m["type"] == "error"]

    def test_live_chat_yields_scripted_reply_bubble(self, live_client):
        with live_client.websocket_connect("/ws") as ws:
            consume_fresh_snapshot(ws)
            ws.send_json({"type": "move", "track_id": "t1", "x": 0.0, "y": 2.0,
                          "facing_deg": 270.0})
            ws.send_json({"type": "speech", "track_id": "t1", "text": "hello there",
                          "final": True})
            reply, _ = drain_until(
                ws, lambda m: m["type"] == "utterance" and m["speaker"] == "agent",
                limit=100,
            )
            assert reply["text"]
            assert reply["interrupted"] is False


class TestGatewayInternals:
    def test_full_event_queue_replies_with_retry_signal(self):
        import asyncio

        from hallway_agent.service.app import Gateway

        async def scenario():
            gateway = Gateway(make_config(event_queue_limit=1), mode="lockstep")
            fake_ws = object()
            outbox: asyncio.Queue = asyncio.Queue()
            gateway.clients[fake_ws] = outbox  # type: ignore[index]
            message = {"type": "control", "action": "tick", "ts": 10}
            await gateway._ingest(fake_ws, message)  # type: ignore[arg-type]
            await gateway._ingest(fake_ws, dict(message, ts=20))  # type: ignore[arg-type]
            return outbox

        outbox = asyncio.run(scenario())
        replies = []
        while not outbox.empty():
            replies.append(outbox.get_nowait())
        assert any(r["type"] == "error" and r["code"] == "backpressure" for r in replies)

    def test_slow_client_is_disconnected_on_fanout(self):
        import asyncio

        from hallway_agent.service.app import Gateway

        async def scenario():
            gateway = Gateway(make_config(), mode="lockstep")
            slow = object()
            gateway.clients[slow] = asyncio.Queue(maxsize=1)  # type: ignore[index]
            gateway.clients[slow].put_nowait({"type": "state"})  # already full
            gateway._fanout([{"type": "journal", "entry": {}}])
            return slow in gateway.clients

        assert asyncio.run(scenario()) is False
