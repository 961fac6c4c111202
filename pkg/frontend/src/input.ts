// Keyboard state -> one action per tick window.
// Four movement keys combine into the 8 compass directions via chords;
// momentary keys (turns, grab, release, stop) fire at most once per tick.

export const MOVE_KEYS: Record<string, [number, number]> = {
  ArrowUp: [0, 1],
  ArrowDown: [0, -1],
  ArrowLeft: [-1, 0],
  ArrowRight: [1, 0],
  w: [0, 1],
  s: [0, -1],
  a: [-1, 0],
  d: [1, 0],
};

export const MOMENTARY_KEYS: Record<string, string> = {
  q: "TURN_LEFT",
  e: "TURN_RIGHT",
  " ": "GRAB",
  x: "RELEASE",
  c: "STOP",
};

const DIR_TO_ACTION: Record<string, string> = {
  "1,0": "FORCE_E",
  "1,1": "FORCE_NE",
  "0,1": "FORCE_N",
  "-1,1": "FORCE_NW",
  "-1,0": "FORCE_W",
  "-1,-1": "FORCE_SW",
  "0,-1": "FORCE_S",
  "1,-1": "FORCE_SE",
};

export class InputTracker {
  private held = new Set<string>();
  private queued: string | null = null;

  keyDown(key: string): void {
    const k = key.length === 1 ? key.toLowerCase() : key;
    if (k in MOVE_KEYS) {
      this.held.add(k);
    } else if (k in MOMENTARY_KEYS && this.queued === null) {
      this.queued = MOMENTARY_KEYS[k];
    }
  }

  keyUp(key: string): void {
    const k = key.length === 1 ? key.toLowerCase() : key;
    this.held.delete(k);
  }

  /** The action for this tick window; NOFORCE when idle. */
  actionForTick(): string {
    if (this.queued !== null) {
      const action = this.queued;
      this.queued = null; // at most one momentary action per tick
      return action;
    }
    let dx = 0;
    let dy = 0;
    for (const key of this.held) {
      const [mx, my] = MOVE_KEYS[key];
      dx += mx;
      dy += my;
    }
    dx = Math.sign(dx);
    dy = Math.sign(dy);
    if (dx === 0 && dy === 0) {
      return "NOFORCE";
    }
    return DIR_TO_ACTION[`${dx},${dy}`];
  }

  reset(): void {
    this.held.clear();
    this.queued = null;
  }
}
