"""Pydantic models for the wire protocol and the REST surface."""

from __future__ import annotations

from typing import Any, Literal, Union

from pydantic import BaseModel, Field, TypeAdapter


class MoveMessage(BaseModel):
    type: Literal["move"]
    track_id: str
    x: float
    y: float
    facing_deg: float = 0.0
    ts: int | None = Field(default=None, ge=0)


class TagMessage(BaseModel):
    type: Literal["tag"]
    tag_id: str
    track_id: str | None = None  # client hint; association is computed engine-side
    present: bool
    ts: int | None = Field(default=None, ge=0)


class SpeechMessage(BaseModel):
    type: Literal["speech"]
    track_id: str
    text: str
    final: bool = False
    ts: int | None = Field(default=None, ge=0)


class ControlMessage(BaseModel):
    type: Literal["control"]
    action: Literal["tick", "start", "stop", "rotate_context"]
    ts: int | None = Field(default=None, ge=0)
    document: dict[str, Any] | None = None
    date: str | None = None


InboundMessage = Union[MoveMessage, TagMessage, SpeechMessage, ControlMessage]

inbound_adapter: TypeAdapter[InboundMessage] = TypeAdapter(
    Union[MoveMessage, TagMessage, SpeechMessage, ControlMessage]
)


class HealthResponse(BaseModel):
    status: str
    mode: str
    clients: int


class ValidateContextRequest(BaseModel):
    document: dict[str, Any]


class ValidateContextResponse(BaseModel):
    valid: bool
    error: str | None = None
    field: str | None = None
    relationship_count: int | None = None


class RunScenarioRequest(BaseModel):
    scenario: dict[str, Any]
    config: dict[str, Any] | None = None


class RunScenarioResponse(BaseModel):
    record: dict[str, Any]


class ReplayRequest(BaseModel):
    record: dict[str, Any]


class ReplayResponse(BaseModel):
    passed: bool
    detail: str
    first_divergence: int | None = None
    config_mismatch: bool = False
