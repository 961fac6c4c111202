import { describe, expect, it } from "vitest";

import {
  DecodeError,
  decodeFovMask,
  decodeServerMessage,
  inputMessage,
  joinMessage,
} from "../src/protocol.js";

describe("decodeServerMessage", () => {
  it("parses a tick message", () => {
    const raw = JSON.stringify({
      v: 1,
      type: "tick",
      step: 3,
      phase: "live",
      agent_id: "a0",
      self: { id: "a0", x: 1, y: 2, angle: 0, vx: 0, vy: 0, holding: null },
      entities: [],
      touched: [],
      fov: "00",
    });
    const msg = decodeServerMessage(raw);
    expect(msg).not.toBeNull();
    expect(msg!.type).toBe("tick");
  });

  it("tolerates unknown message tags", () => {
    const raw = JSON.stringify({ v: 1, type: "totally_new_thing", x: 1 });
    expect(decodeServerMessage(raw)).toBeNull();
  });

  it("rejects wrong versions and malformed payloads", () => {
    expect(() => decodeServerMessage("{")).toThrow(DecodeError);
    expect(() =>
      decodeServerMessage(JSON.stringify({ v: 99, type: "tick" })),
    ).toThrow(DecodeError);
    expect(() =>
      decodeServerMessage(JSON.stringify({ v: 1 })),
    ).toThrow(DecodeError);
  });

  it("builds wire-versioned client messages", () => {
    expect(JSON.parse(joinMessage("s", 1))).toEqual({
      v: 1,
      type: "join",
      session: "s",
      slot: 1,
    });
    expect(JSON.parse(inputMessage("FORCE_E")).action).toBe("FORCE_E");
  });
});

describe("decodeFovMask", () => {
  it("round-trips a known bit pattern", () => {
    // byte 0b10100000 -> cells 0 and 2 visible
    const mask = decodeFovMask("a0" + "00".repeat(49));
    expect(mask.length).toBe(400);
    expect(mask[0]).toBe(true);
    expect(mask[1]).toBe(false);
    expect(mask[2]).toBe(true);
    expect(mask.slice(8).every((v) => !v)).toBe(true);
  });
});
