from __future__ import annotations

import json

import pytest

from hallway_agent import Scenario, ScenarioError, SessionRecord, replay, run_scenario
from hallway_agent.config import ZoneConfig

from helpers import REPO_ROOT, make_config, tick

REFERENCE_SCENARIOS = ["walkup.json", "passerby_pause.json", "two_visitors.json"]


class TestScenarioValidation:
    def test_reference_files_load(self):
        for name in REFERENCE_SCENARIOS:
            scenario = Scenario.load(REPO_ROOT / "scenarios" / name)
            assert scenario.timeline

    def test_decreasing_timestamps_rejected(self):
        with pytest.raises(ScenarioError, match="before"):
            Scenario.from_dict(
                {
                    "name": "bad", "version": 1,
                    "timeline": [tick(100), tick(50)],
                }
            )

    def test_unregistered_tag_rejected(self):
        with pytest.raises(ScenarioError, match="unregistered tag"):
            Scenario.from_dict(
                {
                    "name": "bad", "version": 1,
                    "timeline": [{"at": 0, "type": "tag", "tag_id": "T-?", "present": True}],
                }
            )

    def test_unknown_event_type_rejected(self):
        with pytest.raises(ScenarioError, match="unknown type"):
            Scenario.from_dict(
                {"name": "bad", "version": 1, "timeline": [{"at": 0, "type": "warp"}]}
            )

    def test_unsupported_version_rejected(self):
        with pytest.raises(ScenarioError, match="version"):
            Scenario.from_dict({"name": "bad", "version": 99, "timeline": []})

    def test_round_trips_through_dict(self):
        scenario = Scenario.load(REPO_ROOT / "scenarios" / "walkup.json")
        assert Scenario.from_dict(scenario.to_dict()) == scenario


class TestDeterminism:
    def test_identical_runs_hash_identically(self):
        config = make_config()
        scenario = Scenario.load(REPO_ROOT / "scenarios" / "walkup.json")
        a = run_scenario(scenario, config)
        b = run_scenario(scenario, config)
        assert a.journal_sha256 == b.journal_sha256
        assert a.transcript_sha256 == b.transcript_sha256
        assert a.journal == b.journal

    def test_empty_timeline_yields_engine_start_only(self):
        record = run_scenario(Scenario(name="empty"), make_config())
        assert [e["structured"] for e in record.journal] == [{"event": "engine_start"}]

    def test_record_round_trips_through_file(self, tmp_path):
        record = run_scenario(
            Scenario.load(REPO_ROOT / "scenarios" / "passerby_pause.json"), make_config()
        )
        path = tmp_path / "session.json"
        record.save(path)
        loaded = SessionRecord.load(path)
        assert loaded.journal_sha256 == record.journal_sha256
        assert loaded.to_dict() == record.to_dict()


class TestReplay:
    def _record(self) -> SessionRecord:
        scenario = Scenario.load(REPO_ROOT / "scenarios" / "two_visitors.json")
        return run_scenario(scenario, make_config())

    def test_unmodified_record_passes(self):
        verdict = replay(self._record())
        assert verdict.passed

    def test_tampered_journal_fails_at_sequence(self):
        record = self._record()
        victim = record.journal[4]
        victim["rendered"] = victim["rendered"] + " (edited)"
        verdict = replay(record)
        assert not verdict.passed
        assert verdict.first_divergence == victim["sequence_no"]

    def test_config_mismatch_skips_comparison(self):
        record = self._record()
        other = make_config(zones=ZoneConfig(social_max=0.8))
        verdict = replay(record, config=other)
        assert not verdict.passed
        assert verdict.config_mismatch

    def test_matching_config_is_accepted(self):
        record = self._record()
        verdict = replay(record, config=make_config())
        assert verdict.passed
