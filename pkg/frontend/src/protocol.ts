// Wire protocol types and guards. This file mirrors the gateway's message
// schema exactly; the UI performs no engine logic of its own.

export interface TrackState {
  track_id: string;
  zone: "social" | "public" | "outside";
  distance: number;
  facing_offset: number;
  facing: boolean;
  name: string | null;
}

export interface StateMessage {
  type: "state";
  mode: "NotEngaged" | "Engaged" | "AwaitingStayAnswer";
  engaged: string | null;
  turn_count: number;
  behavior_cue: "idle_reading" | "listening" | "greeting" | "speaking";
  tracks: TrackState[];
}

export interface JournalEntry {
  sequence_no: number;
  timestamp: number;
  kind: string;
  rendered: string;
  subject: string;
  structured: Record<string, unknown>;
}

export interface JournalMessage {
  type: "journal";
  entry: JournalEntry;
}

export interface UtteranceMessage {
  type: "utterance";
  speaker: "user" | "agent";
  text: string;
  interrupted: boolean;
}

export interface SummaryMessage {
  type: "summary";
  subject: string;
  text: string;
}

export interface ErrorMessage {
  type: "error";
  code: string;
  detail: string;
}

export type InboundMessage =
  | StateMessage
  | JournalMessage
  | UtteranceMessage
  | SummaryMessage
  | ErrorMessage;

export interface MoveMessage {
  type: "move";
  track_id: string;
  x: number;
  y: number;
  facing_deg: number;
  ts?: number;
}

export interface TagMessage {
  type: "tag";
  tag_id: string;
  track_id?: string;
  present: boolean;
  ts?: number;
}

export interface SpeechMessage {
  type: "speech";
  track_id: string;
  text: string;
  final: boolean;
  ts?: number;
}

export interface ControlMessage {
  type: "control";
  action: "tick" | "start" | "stop";
  ts?: number;
}

export type OutboundMessage = MoveMessage | TagMessage | SpeechMessage | ControlMessage;

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null;
}

export function parseInbound(raw: unknown): InboundMessage | null {
  if (!isRecord(raw) || typeof raw.type !== "string") return null;
  switch (raw.type) {
    case "state":
      if (
        typeof raw.mode === "string" &&
        typeof raw.turn_count === "number" &&
        typeof raw.behavior_cue === "string" &&
        Array.isArray(raw.tracks)
      ) {
        return raw as unknown as StateMessage;
      }
      return null;
    case "journal":
      if (isRecord(raw.entry) && typeof raw.entry.rendered === "string") {
        return raw as unknown as JournalMessage;
      }
      return null;
    case "utterance":
      if (typeof raw.text === "string" && typeof raw.speaker === "string") {
        return raw as unknown as UtteranceMessage;
      }
      return null;
    case "summary":
      if (typeof raw.subject === "string" && typeof raw.text === "string") {
        return raw as unknown as SummaryMessage;
      }
      return null;
    case "error":
      if (typeof raw.code === "string" && typeof raw.detail === "string") {
        return raw as unknown as ErrorMessage;
      }
      return null;
    default:
      return null;
  }
}
