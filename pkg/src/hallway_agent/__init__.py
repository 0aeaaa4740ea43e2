"""Proxemic engagement engine for an embodied hallway agent."""

from .config import EngineConfig, ResponderSettings, Topic, ZoneConfig, load_config
from .conversation import (
    ExternalResponder,
    PromptBundle,
    ScriptedResponder,
    STAY_PROMPT,
    Utterance,
    assemble_prompt,
    choose_topic,
)
from .engagement import (
    BehaviorCue,
    EngagementDecision,
    EngineState,
    LlmPolicy,
    Mode,
    PolicyInput,
    RulePolicies,
    Verdict,
    rule_disengagement_check,
    rule_engagement_policy,
    step,
)
from .errors import (
    ConfigError,
    ContextValidationError,
    EngineError,
    OrderingError,
    ScenarioError,
    StateError,
)
from .journal import EntryKind, Journal, JournalEntry, render_presence
from .memory import (
    GeneralSummary,
    MemoryStore,
    PersonMemory,
    RelationshipEntry,
    UserContext,
    load_context,
)
from .proxemics import (
    IdentityFuser,
    IdentityRegistry,
    PersonIdentity,
    PresenceEvent,
    PresenceTracker,
    ProxemicObservation,
    TagSighting,
    Zone,
    classify_zone,
    fuse_identity,
)
from .runtime import Runtime
from .simulator import ReplayVerdict, Scenario, SessionRecord, replay, run_scenario

__version__ = "0.1.0"
