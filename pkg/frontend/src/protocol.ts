// Wire protocol: JSON messages over a persistent WebSocket, version-tagged.
// Unknown message tags are tolerated (ignored) on the client side.

export const WIRE_VERSION = 1;

export interface LandmarkInfo {
  id: string;
  color: string;
  box: [number, number, number, number];
}

export interface LayoutInfo {
  width: number;
  height: number;
  walls: Array<[number, number, number, number]>;
  landmarks: LandmarkInfo[];
}

export interface EntityInfo {
  id: string;
  kind: "agent" | "object";
  radius: number;
  color: string;
}

export interface EntityState {
  id: string;
  x: number;
  y: number;
  angle: number;
  vx: number;
  vy: number;
  holding: string | null;
}

export interface ConfigMsg {
  type: "config";
  session: string;
  slot: number;
  agent_id: string;
  goals: Record<string, string>;
  alpha: Array<[string, string, number]>;
  max_steps: number;
  tick_hz: number;
  layout: LayoutInfo;
  entities: EntityInfo[];
}

export interface TickMsg {
  type: "tick";
  step: number;
  phase: string;
  agent_id: string;
  self: EntityState;
  entities: EntityState[];
  touched: string[];
  fov: string; // hex-packed 20x20 cell visibility mask
}

export interface EndMsg {
  type: "end";
  reason: string;
  episode_id: string;
  steps: number;
}

export interface ReplayConfigMsg {
  type: "replay_config";
  episode_id: string;
  steps: number;
  label: { event_type: string; relation: string };
  goals: Record<string, string>;
  human_controlled: boolean;
  layout: LayoutInfo;
  entities: EntityInfo[];
}

export interface ReplayStateDict {
  t: number;
  ids: string[];
  pos: Array<[number, number]>;
  ang: number[];
  grab: number[];
}

export interface ReplayFrameMsg {
  type: "replay_frame";
  frame: number;
  state: ReplayStateDict;
  subgoals: Record<string, string | null>;
  actions: Record<string, string>;
}

export interface ReplayEndMsg {
  type: "replay_end";
}

export type ServerMsg =
  | ConfigMsg
  | TickMsg
  | EndMsg
  | ReplayConfigMsg
  | ReplayFrameMsg
  | ReplayEndMsg;

const KNOWN_TYPES = new Set([
  "config",
  "tick",
  "end",
  "replay_config",
  "replay_frame",
  "replay_end",
]);

export class DecodeError extends Error {}

/** Parse a server message; returns null for unknown-but-versioned tags. */
export function decodeServerMessage(raw: string): ServerMsg | null {
  let data: any;
  try {
    data = JSON.parse(raw);
  } catch (e) {
    throw new DecodeError(`not JSON: ${String(e)}`);
  }
  if (typeof data !== "object" || data === null) {
    throw new DecodeError("message is not an object");
  }
  if (data.v !== WIRE_VERSION) {
    throw new DecodeError(`unsupported wire version: ${data.v}`);
  }
  if (typeof data.type !== "string") {
    throw new DecodeError("message has no type tag");
  }
  if (!KNOWN_TYPES.has(data.type)) {
    return null; // forward compatibility: ignore unknown tags
  }
  return data as ServerMsg;
}

export function joinMessage(session: string, slot: number): string {
  return JSON.stringify({ v: WIRE_VERSION, type: "join", session, slot });
}

export function inputMessage(action: string): string {
  return JSON.stringify({ v: WIRE_VERSION, type: "input", action });
}

/** Unpack the hex cell-visibility mask into a boolean grid row-major list. */
export function decodeFovMask(hex: string, cells = 400): boolean[] {
  const out: boolean[] = new Array(cells).fill(false);
  for (let i = 0; i < hex.length; i += 2) {
    const byte = parseInt(hex.slice(i, i + 2), 16);
    for (let bit = 0; bit < 8; bit++) {
      const idx = (i / 2) * 8 + bit;
      if (idx < cells) {
        out[idx] = (byte & (0x80 >> bit)) !== 0;
      }
    }
  }
  return out;
}
