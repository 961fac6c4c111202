// Canvas 2D rendering of partial views and replay frames.
// Walls and landmarks are always drawn (the map is known); entity bodies are
// drawn only from the message payload, so the live view can never show
// anything the server did not send.

import {
  EntityInfo,
  EntityState,
  LayoutInfo,
  ReplayStateDict,
  decodeFovMask,
} from "./protocol.js";

export interface Camera {
  scale: number;
  offsetX: number;
  offsetY: number;
  height: number;
}

export function fitCamera(
  layout: LayoutInfo,
  canvasW: number,
  canvasH: number,
): Camera {
  const scale = Math.min(canvasW / layout.width, canvasH / layout.height);
  return {
    scale,
    offsetX: (canvasW - layout.width * scale) / 2,
    offsetY: (canvasH - layout.height * scale) / 2,
    height: layout.height,
  };
}

export function toScreen(cam: Camera, x: number, y: number): [number, number] {
  // world y grows upward; canvas y grows downward
  return [
    cam.offsetX + x * cam.scale,
    cam.offsetY + (cam.height - y) * cam.scale,
  ];
}

export interface DrawOptions {
  fovHex?: string;
  subgoals?: Record<string, string | null>;
  banner?: string;
}

export function drawFrame(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  layout: LayoutInfo,
  entityInfo: Map<string, EntityInfo>,
  entities: EntityState[],
  opts: DrawOptions = {},
): void {
  const w = layout.width * cam.scale + cam.offsetX * 2;
  const h = layout.height * cam.scale + cam.offsetY * 2;
  ctx.fillStyle = "#101018";
  ctx.fillRect(0, 0, w, h);
  ctx.fillStyle = "#1c1c28";
  const [ax, ay] = toScreen(cam, 0, layout.height);
  ctx.fillRect(ax, ay, layout.width * cam.scale, layout.height * cam.scale);

  // field-of-view shading from the packed mask
  if (opts.fovHex) {
    const mask = decodeFovMask(opts.fovHex);
    ctx.fillStyle = "rgba(255, 255, 210, 0.10)";
    const side = Math.round(Math.sqrt(mask.length));
    for (let i = 0; i < mask.length; i++) {
      if (!mask[i]) continue;
      const cx = i % side;
      const cy = Math.floor(i / side);
      const [sx, sy] = toScreen(cam, cx, cy + 1);
      ctx.fillRect(sx, sy, cam.scale, cam.scale);
    }
  }

  // landmarks
  for (const lm of layout.landmarks) {
    const [x0, y0, x1, y1] = lm.box;
    const [sx, sy] = toScreen(cam, x0, y1);
    ctx.globalAlpha = 0.35;
    ctx.fillStyle = lm.color;
    ctx.fillRect(sx, sy, (x1 - x0) * cam.scale, (y1 - y0) * cam.scale);
    ctx.globalAlpha = 1.0;
  }

  // walls
  ctx.strokeStyle = "#e8e8f0";
  ctx.lineWidth = Math.max(2, cam.scale * 0.12);
  for (const [x1, y1, x2, y2] of layout.walls) {
    const [sx1, sy1] = toScreen(cam, x1, y1);
    const [sx2, sy2] = toScreen(cam, x2, y2);
    ctx.beginPath();
    ctx.moveTo(sx1, sy1);
    ctx.lineTo(sx2, sy2);
    ctx.stroke();
  }

  // entity bodies with heading markers
  for (const e of entities) {
    const info = entityInfo.get(e.id);
    const radius = info ? info.radius : 0.5;
    const [sx, sy] = toScreen(cam, e.x, e.y);
    ctx.beginPath();
    ctx.fillStyle = info ? info.color : "#888888";
    ctx.arc(sx, sy, radius * cam.scale, 0, Math.PI * 2);
    ctx.fill();
    if (!info || info.kind === "agent") {
      const hx = e.x + radius * 0.9 * Math.cos(e.angle);
      const hy = e.y + radius * 0.9 * Math.sin(e.angle);
      const [mx, my] = toScreen(cam, hx, hy);
      ctx.beginPath();
      ctx.fillStyle = "#10101a";
      ctx.arc(mx, my, Math.max(2, radius * cam.scale * 0.25), 0, Math.PI * 2);
      ctx.fill();
    }
    if (e.holding) {
      ctx.strokeStyle = "#ffffff";
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      ctx.arc(sx, sy, radius * cam.scale + 2, 0, Math.PI * 2);
      ctx.stroke();
    }
  }

  // overlay text (labels / subgoals / error banner)
  if (opts.subgoals) {
    ctx.fillStyle = "#c8c8d8";
    ctx.font = "12px monospace";
    let row = 14;
    for (const [agent, sub] of Object.entries(opts.subgoals)) {
      if (sub) {
        ctx.fillText(`${agent}: ${sub}`, 8, row);
        row += 14;
      }
    }
  }
  if (opts.banner) {
    ctx.fillStyle = "#ff6666";
    ctx.font = "16px monospace";
    ctx.fillText(opts.banner, 8, h - 12);
  }
}

export function replayEntities(
  state: ReplayStateDict,
  info: Map<string, EntityInfo>,
): EntityState[] {
  return state.ids.map((id, i) => ({
    id,
    x: state.pos[i][0],
    y: state.pos[i][1],
    angle: state.ang[i],
    vx: 0,
    vy: 0,
    holding: state.grab[i] >= 0 ? state.ids[state.grab[i]] : null,
  }));
}
