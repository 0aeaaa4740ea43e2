// Live side panel: connection status, engine state mirror, journal feed,
// transcript bubbles, and stored summaries. Pure DOM updates from ClientState.

import { ClientState, engineZoneFor } from "./state.js";

export interface PanelElements {
  connection: HTMLElement;
  mode: HTMLElement;
  cue: HTMLElement;
  turns: HTMLElement;
  zone: HTMLElement;
  journal: HTMLElement;
  transcript: HTMLElement;
  summaries: HTMLElement;
  errors: HTMLElement;
}

export function renderPanel(
  els: PanelElements, state: ClientState, avatarTrackId: string,
): void {
  const buffered =
    state.bufferedInputs > 0 ? ` (${state.bufferedInputs} inputs buffered)` : "";
  els.connection.textContent = `${state.connection}${buffered}`;
  els.connection.className = `status status-${state.connection}`;

  if (state.engine) {
    const engaged = state.engine.engaged ? ` with ${state.engine.engaged}` : "";
    els.mode.textContent = `${state.engine.mode}${engaged}`;
    els.cue.textContent = state.engine.behavior_cue;
    els.turns.textContent = String(state.engine.turn_count);
  } else {
    els.mode.textContent = "-";
    els.cue.textContent = "-";
    els.turns.textContent = "-";
  }
  els.zone.textContent = engineZoneFor(state, avatarTrackId) ?? "outside";

  els.journal.replaceChildren(
    ...state.journal.slice(-30).map((entry) => {
      const line = document.createElement("div");
      line.className = `journal-line journal-${entry.kind}`;
      line.textContent = `#${entry.sequence_no} ${entry.rendered}`;
      return line;
    }),
  );
  els.journal.scrollTop = els.journal.scrollHeight;

  els.transcript.replaceChildren(
    ...state.transcript.slice(-40).map((bubble) => {
      const div = document.createElement("div");
      div.className = `bubble bubble-${bubble.speaker}${bubble.interrupted ? " bubble-interrupted" : ""}`;
      div.textContent = bubble.interrupted ? `${bubble.text} ✂` : bubble.text;
      return div;
    }),
  );
  els.transcript.scrollTop = els.transcript.scrollHeight;

  els.summaries.replaceChildren(
    ...state.summaries.slice(-10).map((summary) => {
      const div = document.createElement("div");
      div.className = "summary";
      div.textContent = `${summary.subject}: ${summary.text}`;
      return div;
    }),
  );

  els.errors.replaceChildren(
    ...state.errors.slice(-3).map((text) => {
      const div = document.createElement("div");
      div.className = "error-line";
      div.textContent = text;
      return div;
    }),
  );
}
