// Two-player game page: join a session slot, render the partial view,
// forward keyboard input.

import { fitCamera, drawFrame } from "./render.js";
import { SessionClient } from "./sessionClient.js";
import { EntityInfo } from "./protocol.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

async function start(): Promise<void> {
  const canvas = document.getElementById("arena") as HTMLCanvasElement;
  const status = document.getElementById("status") as HTMLElement;
  const ctx = canvas.getContext("2d")!;

  let session = param("session", "");
  const slot = parseInt(param("slot", "0"), 10);
  if (!session) {
    const resp = await fetch("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ seed: Date.now() % 100000, tick_hz: 4.0 }),
    });
    const body = await resp.json();
    session = body.session_id;
    status.textContent =
      `session ${session}: share ?session=${session}&slot=1 with player 2`;
  }

  const proto = window.location.protocol === "https:" ? "wss" : "ws";
  const ws = new WebSocket(
    `${proto}://${window.location.host}/sessions/${session}/play/${slot}`,
  );
  const client = new SessionClient(ws as any, session, slot);

  window.addEventListener("keydown", (e) => {
    client.keyDown(e.key);
    e.preventDefault();
  });
  window.addEventListener("keyup", (e) => client.keyUp(e.key));

  client.onUpdate((view) => {
    if (view.decodeFailure) {
      status.textContent = `protocol error: ${view.decodeFailure}`;
      return;
    }
    if (view.config && view.lastTick) {
      const cam = fitCamera(view.config.layout, canvas.width, canvas.height);
      const info = new Map<string, EntityInfo>(
        view.config.entities.map((e) => [e.id, e]),
      );
      const me = view.config.agent_id;
      const goals = view.config.goals;
      drawFrame(ctx, cam, view.config.layout, info,
        view.lastTick.entities, {
          fovHex: view.lastTick.fov,
          banner: view.end
            ? `ended: ${view.end.reason}`
            : `you are ${me} | your goal: ${goals[me]} | ` +
              `other goal: ${goals[me === "a0" ? "a1" : "a0"]}`,
        });
      if (!view.end) {
        status.textContent =
          `step ${view.lastTick.step} / ${view.config.max_steps}`;
      } else {
        status.textContent =
          `episode ${view.end.episode_id} finished (${view.end.reason})`;
      }
    }
  });
}

start();
