// WebSocket game client with an optimistic lock: after a game intent is sent,
// further game intents are suppressed until the server answers with a state
// or an error.

import { encodeIntent, Intent, parseServerMsg, ServerMsg } from "./protocol.js";

export interface ClientHandlers {
  onMessage: (msg: ServerMsg) => void;
  onOpen?: () => void;
  onClose?: () => void;
}

const LOCKING_KINDS = new Set(["choose_mode", "choose_piece", "move", "resign"]);

export class GameClient {
  private ws: WebSocket | null = null;
  private pending = false;
  private handlers: ClientHandlers;

  constructor(handlers: ClientHandlers) {
    this.handlers = handlers;
  }

  connect(url: string): void {
    this.close();
    this.ws = new WebSocket(url);
    this.ws.onopen = () => this.handlers.onOpen?.();
    this.ws.onclose = () => {
      this.ws = null;
      this.handlers.onClose?.();
    };
    this.ws.onmessage = (ev) => {
      const msg = parseServerMsg(String(ev.data));
      if (!msg) return;
      if (msg.kind === "state" || msg.kind === "error") this.pending = false;
      this.handlers.onMessage(msg);
    };
  }

  get connected(): boolean {
    return this.ws !== null && this.ws.readyState === WebSocket.OPEN;
  }

  get locked(): boolean {
    return this.pending;
  }

  /** Sends an intent unless the optimistic lock suppresses it; true if sent. */
  send(intent: Intent): boolean {
    if (!this.connected || !this.ws) return false;
    if (LOCKING_KINDS.has(intent.kind)) {
      if (this.pending) return false;
      this.pending = true;
    }
    this.ws.send(encodeIntent(intent));
    return true;
  }

  close(): void {
    this.ws?.close();
    this.ws = null;
    this.pending = false;
  }
}
