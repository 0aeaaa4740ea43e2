// Client-side state mirror. The reducer applies gateway broadcasts in arrival
// order; nothing here re-derives engine decisions. The avatar's displayed zone
// always comes from the last state broadcast, never from local geometry.

import {
  InboundMessage,
  JournalEntry,
  StateMessage,
  UtteranceMessage,
} from "./protocol.js";

export interface Pose {
  x: number;
  y: number;
  facing: number;
}

export interface Bubble {
  speaker: "user" | "agent";
  text: string;
  interrupted: boolean;
}

export interface StoredSummary {
  subject: string;
  text: string;
}

export interface ClientState {
  connection: "connecting" | "open" | "closed";
  pose: Pose;
  tagWorn: boolean;
  tagId: string | null;
  engine: StateMessage | null;
  journal: JournalEntry[];
  transcript: Bubble[];
  summaries: StoredSummary[];
  errors: string[];
  bufferedInputs: number;
}

export const JOURNAL_CAP = 200;
export const ERROR_CAP = 10;

export function initialState(): ClientState {
  return {
    connection: "connecting",
    // Start beyond the public band; entering the zone is the user's move.
    pose: { x: 0, y: 5.2, facing: 270 },
    tagWorn: false,
    tagId: null,
    engine: null,
    journal: [],
    transcript: [],
    summaries: [],
    errors: [],
    bufferedInputs: 0,
  };
}

export function applyMessage(state: ClientState, message: InboundMessage): ClientState {
  switch (message.type) {
    case "state":
      return { ...state, engine: message };
    case "journal": {
      const journal = [...state.journal, message.entry].slice(-JOURNAL_CAP);
      return { ...state, journal };
    }
    case "utterance":
      return { ...state, transcript: applyUtterance(state.transcript, message) };
    case "summary":
      return { ...state, summaries: [...state.summaries, message] };
    case "error":
      return {
        ...state,
        errors: [...state.errors, `${message.code}: ${message.detail}`].slice(-ERROR_CAP),
      };
  }
}

function applyUtterance(transcript: Bubble[], message: UtteranceMessage): Bubble[] {
  if (message.interrupted && message.speaker === "agent") {
    // The cut-off broadcast repeats the text: mark the live bubble instead of
    // adding a duplicate.
    for (let i = transcript.length - 1; i >= 0; i--) {
      const bubble = transcript[i];
      if (bubble.speaker === "agent" && bubble.text === message.text && !bubble.interrupted) {
        const next = transcript.slice();
        next[i] = { ...bubble, interrupted: true };
        return next;
      }
    }
  }
  return [
    ...transcript,
    { speaker: message.speaker, text: message.text, interrupted: message.interrupted },
  ];
}

/** The zone the engine last reported for a track; the UI never reclassifies. */
export function engineZoneFor(state: ClientState, trackId: string): string | null {
  if (!state.engine) return null;
  const track = state.engine.tracks.find((t) => t.track_id === trackId);
  return track ? track.zone : null;
}
