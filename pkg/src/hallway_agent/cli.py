"""Command-line entry points: run, replay, serve, validate-context."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import EngineConfig, load_config
from .conversation import ExternalResponder
from .errors import ConfigError, ContextValidationError, EngineError, ScenarioError
from .journal import Journal, JournalEntry
from .memory import load_context_file
from .simulator import Scenario, SessionRecord, replay as replay_record, run_scenario


def _load_engine_config(path: str | None) -> EngineConfig:
    if path is None:
        return EngineConfig()
    return load_config(path)


@click.group()
def main() -> None:
    """Proxemic engagement engine for an embodied hallway agent."""


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Engine configuration file (JSON).")
@click.option("--record", "record_path", type=click.Path(dir_okay=False),
              help="Write the replayable session record here.")
@click.option("--journal", "journal_path", type=click.Path(dir_okay=False),
              help="Write the session journal as line-delimited JSON here.")
@click.option("--responder", "responder_kind",
              type=click.Choice(["scripted", "external"]), default=None,
              help="Override the responder kind from the config.")
def run(scenario_file, config_path, record_path, journal_path, responder_kind) -> None:
    """Run a scenario file in lockstep mode and print the journal."""
    try:
        config = _load_engine_config(config_path)
        scenario = Scenario.load(scenario_file)
        responder = None
        if responder_kind == "external":
            endpoint = config.responder.resolve_endpoint()
            if not endpoint:
                raise ConfigError(
                    "external responder requested but no endpoint configured "
                    "(set HALLWAY_RESPONDER_URL or responder.endpoint)"
                )
            responder = ExternalResponder(endpoint, timeout_ms=config.responder.timeout_ms)
        record = run_scenario(scenario, config, responder=responder)
    except (EngineError, ScenarioError, ConfigError) as exc:
        raise click.ClickException(str(exc))
    for entry in record.journal:
        click.echo(f"[{entry['timestamp']:>8}] {entry['rendered']}")
    click.echo(f"journal sha256: {record.journal_sha256}")
    if record_path:
        record.save(record_path)
        click.echo(f"record written to {record_path}")
    if journal_path:
        journal = Journal([JournalEntry.from_dict(e) for e in record.journal])
        journal.save_jsonl(journal_path)
        click.echo(f"journal written to {journal_path}")


@main.command(name="replay")
@click.argument("record_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Require the record to match this configuration.")
def replay_cmd(record_file, config_path) -> None:
    """Re-execute a session record and verify its hashes."""
    record = SessionRecord.load(record_file)
    config = _load_engine_config(config_path) if config_path else None
    verdict = replay_record(record, config=config)
    click.echo(f"replay: {'pass' if verdict.passed else 'FAIL'} ({verdict.detail})")
    if not verdict.passed:
        sys.exit(1)


@main.command()
@click.option("--bind", default="127.0.0.1:8000", show_default=True,
              help="host:port to listen on.")
@click.option("--mode", type=click.Choice(["live", "lockstep"]), default="live",
              show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False),
              help="Serve a built browser client from this directory at /ui.")
def serve(bind, mode, config_path, ui_dir) -> None:
    """Start the gateway service (WebSocket wire protocol + REST)."""
    import uvicorn

    from .service import create_app

    try:
        config = _load_engine_config(config_path)
    except (ConfigError, EngineError) as exc:
        raise click.ClickException(str(exc))
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise click.ClickException(f"--bind must be host:port, got {bind!r}")
    app = create_app(config, mode=mode, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=int(port))


@main.command(name="validate-context")
@click.argument("context_file", type=click.Path(exists=True, dir_okay=False))
def validate_context(context_file) -> None:
    """Validate a daily user-context document."""
    try:
        context = load_context_file(context_file)
    except ContextValidationError as exc:
        click.echo(f"invalid: {exc}")
        sys.exit(1)
    click.echo(
        f"valid: {len(context.social_relationships)} relationship "
        f"entr{'y' if len(context.social_relationships) == 1 else 'ies'}"
    )


if __name__ == "__main__":
    main()
