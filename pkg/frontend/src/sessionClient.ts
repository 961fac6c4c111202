// Live-session client: joins a slot, forwards one action per tick, and
// keeps only the latest server view (no stale entities ever linger).

import { InputTracker } from "./input.js";
import {
  ConfigMsg,
  EndMsg,
  ServerMsg,
  TickMsg,
  decodeServerMessage,
  inputMessage,
  joinMessage,
} from "./protocol.js";

export interface SessionView {
  config: ConfigMsg | null;
  lastTick: TickMsg | null;
  end: EndMsg | null;
  decodeFailure: string | null;
}

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: any }) => void) | null;
  onclose: (() => void) | null;
  onopen: (() => void) | null;
}

export class SessionClient {
  readonly view: SessionView = {
    config: null,
    lastTick: null,
    end: null,
    decodeFailure: null,
  };
  readonly input = new InputTracker();
  private listeners: Array<(view: SessionView) => void> = [];
  closed = false;

  constructor(
    private ws: WebSocketLike,
    private session: string,
    private slot: number,
  ) {
    ws.onopen = () => {
      ws.send(joinMessage(this.session, this.slot));
    };
    ws.onmessage = (ev) => this.handleRaw(String(ev.data));
    ws.onclose = () => {
      this.closed = true;
      this.notify();
    };
  }

  onUpdate(fn: (view: SessionView) => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) {
      fn(this.view);
    }
  }

  handleRaw(raw: string): void {
    let msg: ServerMsg | null;
    try {
      msg = decodeServerMessage(raw);
    } catch (e) {
      // visible error, no crash
      this.view.decodeFailure = String(e);
      this.notify();
      return;
    }
    if (msg === null) {
      return; // unknown tag: tolerated
    }
    this.handle(msg);
  }

  handle(msg: ServerMsg): void {
    switch (msg.type) {
      case "config":
        this.view.config = msg;
        break;
      case "tick":
        // replace, never merge: the live view shows only this message
        this.view.lastTick = msg;
        this.ws.send(inputMessage(this.input.actionForTick()));
        break;
      case "end":
        this.view.end = msg;
        break;
      default:
        return;
    }
    this.notify();
  }

  keyDown(key: string): void {
    this.input.keyDown(key);
  }

  keyUp(key: string): void {
    this.input.keyUp(key);
  }

  leave(): void {
    this.ws.send(JSON.stringify({ v: 1, type: "leave" }));
    this.ws.close();
  }
}
