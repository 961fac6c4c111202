// Replay viewer page: timeline scrubbing, speed control, annotations, and
// an optional side-by-side comparison pane (human vs synthetic episodes).

import { EntityInfo } from "./protocol.js";
import { ReplayController } from "./replayControls.js";
import { drawFrame, fitCamera, replayEntities } from "./render.js";

function connectPane(
  episodeId: string,
  canvas: HTMLCanvasElement,
  label: HTMLElement,
  scrubber: HTMLInputElement | null,
): ReplayController {
  const ctx = canvas.getContext("2d")!;
  const proto = window.location.protocol === "https:" ? "wss" : "ws";
  const ws = new WebSocket(
    `${proto}://${window.location.host}/replays/${episodeId}/stream`,
  );
  const controller = new ReplayController(ws as any);
  controller.onUpdate((view) => {
    if (view.decodeFailure) {
      label.textContent = `stream error: ${view.decodeFailure}`;
      return;
    }
    if (!view.config) return;
    if (scrubber) {
      scrubber.max = String(view.config.steps);
      if (view.frame) scrubber.value = String(view.frame.frame);
    }
    const info = new Map<string, EntityInfo>(
      view.config.entities.map((e) => [e.id, e]),
    );
    const tag =
      `${view.config.label.event_type} / ${view.config.label.relation}` +
      (view.config.human_controlled ? " (human)" : " (synthetic)");
    label.textContent = view.buffering
      ? `${tag} — buffering…`
      : `${tag} — frame ${view.frame?.frame ?? 0}/${view.config.steps}`;
    if (view.frame) {
      const cam = fitCamera(view.config.layout, canvas.width, canvas.height);
      drawFrame(
        ctx, cam, view.config.layout, info,
        replayEntities(view.frame.state, info),
        { subgoals: view.frame.subgoals, banner: tag },
      );
    }
  });
  return controller;
}

function start(): void {
  const params = new URLSearchParams(window.location.search);
  const episode = params.get("episode") ?? "";
  const compare = params.get("compare");

  const canvas = document.getElementById("replay") as HTMLCanvasElement;
  const label = document.getElementById("label") as HTMLElement;
  const scrubber = document.getElementById("scrubber") as HTMLInputElement;
  const controller = connectPane(episode, canvas, label, scrubber);

  (document.getElementById("play") as HTMLButtonElement).onclick = () =>
    controller.play();
  (document.getElementById("pause") as HTMLButtonElement).onclick = () =>
    controller.pause();
  scrubber.oninput = () => controller.seek(parseInt(scrubber.value, 10));
  const speed = document.getElementById("speed") as HTMLSelectElement;
  speed.onchange = () => controller.setSpeed(parseFloat(speed.value));

  if (compare) {
    const canvas2 = document.getElementById("replay2") as HTMLCanvasElement;
    const label2 = document.getElementById("label2") as HTMLElement;
    canvas2.style.display = "block";
    const second = connectPane(compare, canvas2, label2, null);
    (document.getElementById("play") as HTMLButtonElement).addEventListener(
      "click", () => second.play(),
    );
    (document.getElementById("pause") as HTMLButtonElement).addEventListener(
      "click", () => second.pause(),
    );
  }
}

start();
