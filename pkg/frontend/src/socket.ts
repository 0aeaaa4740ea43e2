// Gateway connection wrapper. The UI is stateless with respect to engine
// logic: on every (re)connect the client state resets and is rebuilt from the
// gateway's snapshot replay, so a reconnected view is identical to one that
// never dropped. Outbound messages sent while disconnected are buffered and
// flushed on reconnect, with the buffer size surfaced as a warning.

import { InboundMessage, OutboundMessage, parseInbound } from "./protocol.js";
import { ClientState, applyMessage, initialState } from "./state.js";

export interface TransportHandlers {
  onOpen(): void;
  onMessage(data: string): void;
  onClose(): void;
}

export interface Transport {
  send(data: string): void;
  close(): void;
}

export type TransportFactory = (url: string, handlers: TransportHandlers) => Transport;

export const OUTBOUND_BUFFER_CAP = 200;

export class GatewayClient {
  state: ClientState = initialState();
  private transport: Transport | null = null;
  private buffer: OutboundMessage[] = [];
  private listeners: Array<(state: ClientState) => void> = [];
  private reconnectDelayMs = 500;
  private closedByUser = false;

  constructor(
    private readonly url: string,
    private readonly factory: TransportFactory,
    private readonly scheduleReconnect: (fn: () => void, delayMs: number) => void =
      (fn, delay) => setTimeout(fn, delay),
  ) {}

  onChange(listener: (state: ClientState) => void): void {
    this.listeners.push(listener);
  }

  connect(): void {
    this.closedByUser = false;
    this.setState({ ...this.state, connection: "connecting" });
    this.transport = this.factory(this.url, {
      onOpen: () => this.handleOpen(),
      onMessage: (data) => this.handleMessage(data),
      onClose: () => this.handleClose(),
    });
  }

  disconnect(): void {
    this.closedByUser = true;
    this.transport?.close();
    this.transport = null;
    this.setState({ ...this.state, connection: "closed" });
  }

  send(message: OutboundMessage): void {
    if (this.state.connection === "open" && this.transport) {
      this.transport.send(JSON.stringify(message));
      return;
    }
    // Disconnected: buffer with a visible warning via bufferedInputs.
    this.buffer.push(message);
    if (this.buffer.length > OUTBOUND_BUFFER_CAP) {
      this.buffer.shift();
    }
    this.setState({ ...this.state, bufferedInputs: this.buffer.length });
  }

  private handleOpen(): void {
    // Fresh view: the gateway replays its snapshot right after accepting us.
    const pose = this.state.pose;
    const tagWorn = this.state.tagWorn;
    const tagId = this.state.tagId;
    this.setState({ ...initialState(), connection: "open", pose, tagWorn, tagId });
    const queued = this.buffer;
    this.buffer = [];
    for (const message of queued) {
      this.transport?.send(JSON.stringify(message));
    }
    if (queued.length > 0) {
      this.setState({ ...this.state, bufferedInputs: 0 });
    }
  }

  private handleMessage(data: string): void {
    let raw: unknown;
    try {
      raw = JSON.parse(data);
    } catch {
      return;
    }
    const message: InboundMessage | null = parseInbound(raw);
    if (message === null) return;
    this.setState(applyMessage(this.state, message));
  }

  private handleClose(): void {
    this.transport = null;
    this.setState({ ...this.state, connection: "closed" });
    if (!this.closedByUser) {
      this.scheduleReconnect(() => this.connect(), this.reconnectDelayMs);
    }
  }

  updatePose(pose: ClientState["pose"]): void {
    this.setState({ ...this.state, pose });
  }

  setTag(tagId: string | null): void {
    this.setState({ ...this.state, tagWorn: tagId !== null, tagId });
  }

  private setState(next: ClientState): void {
    this.state = next;
    for (const listener of this.listeners) {
      listener(next);
    }
  }
}

export function browserTransportFactory(url: string, handlers: TransportHandlers): Transport {
  const ws = new WebSocket(url);
  ws.onopen = () => handlers.onOpen();
  ws.onmessage = (event) => handlers.onMessage(String(event.data));
  ws.onclose = () => handlers.onClose();
  return {
    send: (data) => ws.send(data),
    close: () => ws.close(),
  };
}
