import { describe, expect, it } from "vitest";

import { LayoutInfo, EntityInfo, EntityState } from "../src/protocol.js";
import { drawFrame, fitCamera, toScreen } from "../src/render.js";

class FakeContext {
  calls: Array<{ op: string; args: any[] }> = [];
  fillStyle = "";
  strokeStyle = "";
  lineWidth = 0;
  globalAlpha = 1;
  font = "";

  private log(op: string, ...args: any[]): void {
    this.calls.push({ op, args });
  }

  fillRect(...a: any[]) { this.log("fillRect", ...a); }
  strokeRect(...a: any[]) { this.log("strokeRect", ...a); }
  beginPath() { this.log("beginPath"); }
  moveTo(...a: any[]) { this.log("moveTo", ...a); }
  lineTo(...a: any[]) { this.log("lineTo", ...a); }
  stroke() { this.log("stroke"); }
  fill() { this.log("fill"); }
  arc(...a: any[]) { this.log("arc", ...a); }
  fillText(...a: any[]) { this.log("fillText", ...a); }
}

const layout: LayoutInfo = {
  width: 20,
  height: 20,
  walls: [[10, 0, 10, 12]],
  landmarks: [
    { id: "L0", color: "red", box: [0, 0, 4, 4] },
    { id: "L1", color: "blue", box: [16, 16, 20, 20] },
  ],
};

const info = new Map<string, EntityInfo>([
  ["a0", { id: "a0", kind: "agent", radius: 0.7, color: "green" }],
  ["o0", { id: "o0", kind: "object", radius: 0.9, color: "orange" }],
]);

function entity(id: string, x: number, y: number): EntityState {
  return { id, x, y, angle: 0, vx: 0, vy: 0, holding: null };
}

describe("camera", () => {
  it("letterboxes and fits the arena", () => {
    const cam = fitCamera(layout, 800, 600);
    expect(cam.scale).toBe(30); // min(800/20, 600/20)
    expect(cam.offsetX).toBe((800 - 600) / 2);
    expect(cam.offsetY).toBe(0);
  });

  it("flips the y axis", () => {
    const cam = fitCamera(layout, 400, 400);
    const [, syTop] = toScreen(cam, 0, 20);
    const [, syBottom] = toScreen(cam, 0, 0);
    expect(syTop).toBeLessThan(syBottom);
  });
});

describe("drawFrame", () => {
  it("draws only the entities present in the message", () => {
    const ctx = new FakeContext();
    const cam = fitCamera(layout, 400, 400);
    drawFrame(ctx as any, cam, layout, info, [entity("a0", 5, 5)]);
    const arcs = ctx.calls.filter((c) => c.op === "arc");
    // one body disc + one heading marker for the single agent
    expect(arcs.length).toBe(2);
  });

  it("empty seen-set still draws the map", () => {
    const ctx = new FakeContext();
    const cam = fitCamera(layout, 400, 400);
    drawFrame(ctx as any, cam, layout, info, []);
    const rects = ctx.calls.filter((c) => c.op === "fillRect");
    expect(rects.length).toBeGreaterThanOrEqual(2 + layout.landmarks.length);
    const strokes = ctx.calls.filter((c) => c.op === "stroke");
    expect(strokes.length).toBeGreaterThanOrEqual(layout.walls.length);
    expect(ctx.calls.some((c) => c.op === "arc")).toBe(false);
  });

  it("four entities draw four bodies at message coordinates", () => {
    const ctx = new FakeContext();
    const cam = fitCamera(layout, 400, 400);
    const ents = [
      entity("a0", 2, 2),
      entity("o0", 5, 5),
      entity("a1", 8, 8),
      entity("o1", 11, 11),
    ];
    drawFrame(ctx as any, cam, layout, info, ents);
    const bodyArcs = ctx.calls.filter((c) => c.op === "arc");
    expect(bodyArcs.length).toBeGreaterThanOrEqual(4);
    for (const e of ents) {
      const [sx, sy] = toScreen(cam, e.x, e.y);
      expect(
        bodyArcs.some(
          (c) =>
            Math.abs(c.args[0] - sx) < 1e-9 &&
            Math.abs(c.args[1] - sy) < 1e-9,
        ),
      ).toBe(true);
    }
  });

  it("fov shading covers exactly the cells of the mask", () => {
    const ctx = new FakeContext();
    const cam = fitCamera(layout, 400, 400);
    // visible cells 0 and 2 (bottom-left corner cells)
    const fovHex = "a0" + "00".repeat(48);
    drawFrame(ctx as any, cam, layout, info, [], { fovHex });
    // fillRect calls at cell size cam.scale x cam.scale
    const cellRects = ctx.calls.filter(
      (c) =>
        c.op === "fillRect" &&
        Math.abs(c.args[2] - cam.scale) < 1e-9 &&
        Math.abs(c.args[3] - cam.scale) < 1e-9 &&
        c.args.length === 4,
    );
    // raster check: the shaded rects sit at cells (0,0) and (2,0)
    const [x0, y0] = toScreen(cam, 0, 1);
    const [x2] = toScreen(cam, 2, 1);
    expect(cellRects.length).toBe(2);
    expect(cellRects.some((c) => Math.abs(c.args[0] - x0) < 1e-9
      && Math.abs(c.args[1] - y0) < 1e-9)).toBe(true);
    expect(cellRects.some((c) => Math.abs(c.args[0] - x2) < 1e-9)).toBe(true);
  });

  it("renders subgoal overlays and banners as text", () => {
    const ctx = new FakeContext();
    const cam = fitCamera(layout, 400, 400);
    drawFrame(ctx as any, cam, layout, info, [], {
      subgoals: { a0: "Close(a0,o0)", a1: null },
      banner: "helping-obstacle / friendly",
    });
    const texts = ctx.calls.filter((c) => c.op === "fillText");
    expect(texts.some((c) => String(c.args[0]).includes("Close"))).toBe(true);
    expect(texts.some((c) => String(c.args[0]).includes("friendly"))).toBe(
      true,
    );
  });
});
