// Wiring: canvas steering (pointer drag + WASD/QE), tag toggle, hold-to-talk
// chat, and the live panel, all over one gateway connection.

import { HallwayMap } from "./map.js";
import { renderPanel, PanelElements } from "./panel.js";
import { GatewayClient, browserTransportFactory } from "./socket.js";
import { HoldToTalk } from "./talk.js";
import { MoveThrottle } from "./throttle.js";

const AVATAR_TRACK = "avatar-1";

function wsUrl(): string {
  const params = new URLSearchParams(location.search);
  const override = params.get("ws");
  if (override) return override;
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/ws`;
}

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function main(): void {
  const canvas = byId<HTMLCanvasElement>("map");
  const map = new HallwayMap(canvas);
  const client = new GatewayClient(wsUrl(), browserTransportFactory);
  const throttle = new MoveThrottle(100); // <= 10 move messages per second
  const talk = new HoldToTalk();

  const panel: PanelElements = {
    connection: byId("connection"),
    mode: byId("mode"),
    cue: byId("cue"),
    turns: byId("turns"),
    zone: byId("zone"),
    journal: byId("journal"),
    transcript: byId("transcript"),
    summaries: byId("summaries"),
    errors: byId("errors"),
  };

  fetch("/config")
    .then((res) => (res.ok ? res.json() : null))
    .then((config) => {
      if (!config) return;
      if (config.zones) {
        map.setZones({
          socialMax: config.zones.social_max,
          publicMax: config.zones.public_max,
        });
      }
      if (Array.isArray(config.identities) && config.identities.length > 0) {
        const select = byId<HTMLSelectElement>("tag-select");
        select.replaceChildren();
        const none = document.createElement("option");
        none.value = "";
        none.textContent = "(none — passerby)";
        select.append(none);
        for (const identity of config.identities) {
          const option = document.createElement("option");
          option.value = String(identity.tag_id);
          option.textContent = `${identity.tag_id} (${identity.name})`;
          select.append(option);
        }
      }
    })
    .catch(() => undefined);

  const sendPose = (): void => {
    const pose = client.state.pose;
    const move = throttle.offer({ x: pose.x, y: pose.y, facing: pose.facing }, performance.now());
    if (move) {
      client.send({
        type: "move", track_id: AVATAR_TRACK,
        x: move.x, y: move.y, facing_deg: move.facing,
      });
    }
  };
  setInterval(() => {
    const move = throttle.flush(performance.now());
    if (move) {
      client.send({
        type: "move", track_id: AVATAR_TRACK,
        x: move.x, y: move.y, facing_deg: move.facing,
      });
    }
  }, 50);

  // Keepalive: a stationary avatar must keep reporting its pose, or the
  // engine's track timeout will read the silence as walking away.
  setInterval(() => {
    if (client.state.connection !== "open") return;
    const pose = client.state.pose;
    client.send({
      type: "move", track_id: AVATAR_TRACK,
      x: pose.x, y: pose.y, facing_deg: pose.facing,
    });
  }, 2000);

  // Pointer steering: drag moves the avatar, facing follows the drag direction.
  let dragging = false;
  canvas.addEventListener("pointerdown", (event) => {
    dragging = true;
    canvas.setPointerCapture(event.pointerId);
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
  });
  canvas.addEventListener("pointermove", (event) => {
    if (!dragging) return;
    const rect = canvas.getBoundingClientRect();
    const world = map.toWorld(event.clientX - rect.left, event.clientY - rect.top);
    const previous = client.state.pose;
    const dx = world.x - previous.x;
    const dy = world.y - previous.y;
    const facing =
      Math.abs(dx) + Math.abs(dy) > 1e-6
        ? (Math.atan2(dy, dx) * 180) / Math.PI
        : previous.facing;
    client.updatePose({ x: world.x, y: world.y, facing });
    sendPose();
  });

  // Keyboard steering: WASD to move, Q/E to turn, F to face the agent.
  const STEP = 0.15;
  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    const pose = { ...client.state.pose };
    switch (event.key.toLowerCase()) {
      case "w": pose.y -= STEP; break;
      case "s": pose.y += STEP; break;
      case "a": pose.x -= STEP; break;
      case "d": pose.x += STEP; break;
      case "q": pose.facing -= 15; break;
      case "e": pose.facing += 15; break;
      case "f":
        pose.facing = (Math.atan2(-pose.y, -pose.x) * 180) / Math.PI;
        break;
      default: return;
    }
    client.updatePose(pose);
    sendPose();
  });

  // Tag toggle.
  const tagSelect = byId<HTMLSelectElement>("tag-select");
  tagSelect.addEventListener("change", () => {
    const previous = client.state.tagId;
    const next = tagSelect.value || null;
    if (previous) {
      client.send({ type: "tag", tag_id: previous, track_id: AVATAR_TRACK, present: false });
    }
    client.setTag(next);
    if (next) {
      client.send({ type: "tag", tag_id: next, track_id: AVATAR_TRACK, present: true });
    }
  });

  // Chat: Enter sends a final utterance; holding the Talk button streams
  // non-final fragments word by word until release.
  const chatInput = byId<HTMLInputElement>("chat-input");
  const talkButton = byId<HTMLButtonElement>("talk-button");
  let lastStreamed = 0;

  const sendSpeech = (text: string, final: boolean): void => {
    client.send({ type: "speech", track_id: AVATAR_TRACK, text, final });
  };

  chatInput.addEventListener("keydown", (event) => {
    if (event.key !== "Enter") return;
    const out = talk.release(chatInput.value);
    if (out) sendSpeech(out.text, true);
    chatInput.value = "";
    lastStreamed = 0;
  });

  chatInput.addEventListener("input", () => {
    if (!talk.isHeld) return;
    const value = chatInput.value;
    const boundary = value.lastIndexOf(" ");
    if (boundary > lastStreamed) {
      const fragment = talk.fragment(value.slice(lastStreamed, boundary));
      if (fragment) sendSpeech(fragment.text, false);
      lastStreamed = boundary + 1;
    }
  });

  talkButton.addEventListener("pointerdown", () => {
    talk.press();
    lastStreamed = 0;
    talkButton.classList.add("holding");
    chatInput.focus();
  });
  talkButton.addEventListener("pointerup", () => {
    const out = talk.release(chatInput.value.slice(lastStreamed));
    if (out) sendSpeech(out.text, true);
    chatInput.value = "";
    lastStreamed = 0;
    talkButton.classList.remove("holding");
  });

  client.onChange((state) => {
    renderPanel(panel, state, AVATAR_TRACK);
    map.draw(state, AVATAR_TRACK);
  });

  client.connect();
  map.draw(client.state, AVATAR_TRACK);
}

main();
