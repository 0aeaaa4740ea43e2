// Top-down hallway renderer: the agent sits on the left wall at the origin,
// zone rings show the configured bands, and the avatar is drawn at its pose
// with a facing tick. Colors key off the engine-reported zone, not local math.

import { ClientState, engineZoneFor } from "./state.js";

export interface ZoneRadii {
  socialMax: number;
  publicMax: number;
}

const PX_PER_METER = 56;

export class HallwayMap {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private zones: ZoneRadii = { socialMax: 1.2, publicMax: 4.5 },
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
  }

  setZones(zones: ZoneRadii): void {
    this.zones = zones;
  }

  /** Canvas pixel position for a world coordinate (agent at the origin). */
  toPixels(x: number, y: number): { px: number; py: number } {
    return {
      px: this.canvas.width / 2 + x * PX_PER_METER,
      py: this.canvas.height / 2 + y * PX_PER_METER,
    };
  }

  toWorld(px: number, py: number): { x: number; y: number } {
    return {
      x: (px - this.canvas.width / 2) / PX_PER_METER,
      y: (py - this.canvas.height / 2) / PX_PER_METER,
    };
  }

  draw(state: ClientState, avatarTrackId: string): void {
    const { ctx, canvas } = this;
    ctx.clearRect(0, 0, canvas.width, canvas.height);

    // Hallway floor.
    ctx.fillStyle = "#f4f1ea";
    ctx.fillRect(0, 0, canvas.width, canvas.height);

    // Zone rings around the agent.
    const origin = this.toPixels(0, 0);
    for (const [radius, color] of [
      [this.zones.publicMax, "#d7e3f4"],
      [this.zones.socialMax, "#f7d9c4"],
    ] as const) {
      ctx.beginPath();
      ctx.arc(origin.px, origin.py, radius * PX_PER_METER, 0, Math.PI * 2);
      ctx.fillStyle = color;
      ctx.fill();
    }
    ctx.strokeStyle = "#8899aa";
    ctx.setLineDash([6, 6]);
    for (const radius of [this.zones.socialMax, this.zones.publicMax]) {
      ctx.beginPath();
      ctx.arc(origin.px, origin.py, radius * PX_PER_METER, 0, Math.PI * 2);
      ctx.stroke();
    }
    ctx.setLineDash([]);

    // The agent (projected on the wall).
    ctx.fillStyle = "#30506d";
    ctx.fillRect(origin.px - 14, origin.py - 14, 28, 28);
    ctx.fillStyle = "#ffffff";
    ctx.font = "10px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText("AGENT", origin.px, origin.py + 3);

    // Other tracked bodies reported by the engine.
    if (state.engine) {
      for (const track of state.engine.tracks) {
        if (track.track_id === avatarTrackId) continue;
        // Other tracks have no client-side pose; park them on their distance arc.
        const p = this.toPixels(track.distance, 0);
        ctx.beginPath();
        ctx.arc(p.px, p.py, 8, 0, Math.PI * 2);
        ctx.fillStyle = "#b5b5b5";
        ctx.fill();
      }
    }

    // The avatar, colored by the engine's zone verdict.
    const zone = engineZoneFor(state, avatarTrackId);
    const pose = state.pose;
    const a = this.toPixels(pose.x, pose.y);
    ctx.beginPath();
    ctx.arc(a.px, a.py, 10, 0, Math.PI * 2);
    ctx.fillStyle = zone === "social" ? "#d2622a" : zone === "public" ? "#3a6ea5" : "#777777";
    ctx.fill();
    // Facing tick.
    const rad = (pose.facing * Math.PI) / 180;
    ctx.beginPath();
    ctx.moveTo(a.px, a.py);
    ctx.lineTo(a.px + Math.cos(rad) * 16, a.py + Math.sin(rad) * 16);
    ctx.strokeStyle = "#222222";
    ctx.lineWidth = 2;
    ctx.stroke();
    ctx.lineWidth = 1;

    if (state.tagWorn && state.tagId) {
      ctx.fillStyle = "#222222";
      ctx.font = "11px sans-serif";
      ctx.fillText(state.tagId, a.px, a.py - 14);
    }
  }
}
