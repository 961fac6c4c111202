// Replay playback controller: play/pause/seek/speed over the frame stream,
// with label and subgoal annotations carried on each frame.

import {
  ReplayConfigMsg,
  ReplayFrameMsg,
  ServerMsg,
  decodeServerMessage,
} from "./protocol.js";
import { WebSocketLike } from "./sessionClient.js";

export interface ReplayView {
  config: ReplayConfigMsg | null;
  frame: ReplayFrameMsg | null;
  playing: boolean;
  speed: number;
  finished: boolean;
  buffering: boolean;
  decodeFailure: string | null;
}

export class ReplayController {
  readonly view: ReplayView = {
    config: null,
    frame: null,
    playing: false,
    speed: 1.0,
    finished: false,
    buffering: false,
    decodeFailure: null,
  };
  private listeners: Array<(view: ReplayView) => void> = [];

  constructor(private ws: WebSocketLike) {
    ws.onmessage = (ev) => this.handleRaw(String(ev.data));
    ws.onopen = null;
    ws.onclose = () => {
      this.view.buffering = !this.view.finished;
      this.notify();
    };
  }

  onUpdate(fn: (view: ReplayView) => void): void {
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
      this.view.decodeFailure = String(e);
      this.notify();
      return;
    }
    if (msg === null) return;
    if (msg.type === "replay_config") {
      this.view.config = msg;
    } else if (msg.type === "replay_frame") {
      this.view.frame = msg;
      this.view.buffering = false;
      this.view.finished = false;
    } else if (msg.type === "replay_end") {
      this.view.playing = false;
      this.view.finished = true;
    } else {
      return;
    }
    this.notify();
  }

  play(): void {
    this.view.playing = true;
    this.view.finished = false;
    this.ws.send(JSON.stringify({ type: "play" }));
    this.notify();
  }

  pause(): void {
    this.view.playing = false;
    this.ws.send(JSON.stringify({ type: "pause" }));
    this.notify();
  }

  seek(frame: number): void {
    this.view.buffering = true;
    this.ws.send(JSON.stringify({ type: "seek", frame }));
    this.notify();
  }

  setSpeed(speed: number): void {
    this.view.speed = speed;
    this.ws.send(JSON.stringify({ type: "speed", speed }));
    this.notify();
  }

  close(): void {
    this.ws.send(JSON.stringify({ type: "close" }));
    this.ws.close();
  }
}
