// Cockpit wiring: WebSocket session, keyboard/gamepad sampling at the
// display rate, command sends capped at 20 Hz, canvas rendering loop.

import { DEFAULT_MAPPING, gamepadToCmd, keysToAxes, rampCmd } from "./input.js";
import {
  assistMessage,
  cmdMessage,
  encodeMessage,
  parseServerFrame,
  resetMessage,
  Vec3,
} from "./protocol.js";
import { applyFrame, emptyView, landingLabel, SessionView } from "./state.js";
import { renderHud, renderSide, renderTop } from "./render.js";

const SEND_HZ = 20;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main(): void {
  const topCtx = el<HTMLCanvasElement>("top-view").getContext("2d")!;
  const sideCtx = el<HTMLCanvasElement>("side-view").getContext("2d")!;
  const hud = el<HTMLDivElement>("hud");
  const landingsEl = el<HTMLUListElement>("landings");
  const assistBox = el<HTMLInputElement>("assist-toggle");
  const challengeBox = el<HTMLInputElement>("challenge-toggle");
  const resetBtn = el<HTMLButtonElement>("reset-btn");
  const seedInput = el<HTMLInputElement>("seed-input");
  const goalInput = el<HTMLInputElement>("goal-input");

  let view: SessionView = emptyView();
  const url = `ws://${location.hostname}:${location.port || 8765}/session`;
  const socket = new WebSocket(url);

  socket.addEventListener("message", (ev) => {
    const frame = parseServerFrame(String(ev.data));
    if (!frame) return;
    view = applyFrame(view, frame);
    if (frame.type === "landed") {
      const li = document.createElement("li");
      li.textContent = landingLabel(frame);
      li.className = frame.success ? "ok" : "fail";
      landingsEl.appendChild(li);
    }
    if (frame.type === "warning") console.warn("server:", frame.message);
  });

  const pressed = new Set<string>();
  window.addEventListener("keydown", (ev) => pressed.add(ev.code));
  window.addEventListener("keyup", (ev) => pressed.delete(ev.code));

  assistBox.addEventListener("change", () => {
    socket.send(encodeMessage(assistMessage(assistBox.checked)));
  });
  challengeBox.addEventListener("change", () => {
    view = { ...view, challengeMode: challengeBox.checked };
  });
  resetBtn.addEventListener("click", () => {
    socket.send(
      encodeMessage(resetMessage(Number(seedInput.value) || 0, Number(goalInput.value) || 0))
    );
    landingsEl.appendChild(document.createElement("hr"));
  });

  let cmd: Vec3 = [0, 0, 0];
  let lastSent = 0;
  let lastSample = performance.now();

  function sample(now: number): void {
    const dt = Math.min(0.1, (now - lastSample) / 1000);
    lastSample = now;
    const pads = navigator.getGamepads ? navigator.getGamepads() : [];
    const pad = pads && pads[0];
    if (pad && pad.axes.length >= 4) {
      // left stick: forward/lateral; right stick vertical: climb/descend
      cmd = gamepadToCmd([-pad.axes[1], pad.axes[0], -pad.axes[3]] as Vec3);
    } else {
      cmd = rampCmd(cmd, keysToAxes(pressed), dt, DEFAULT_MAPPING);
    }
    if (socket.readyState === WebSocket.OPEN && now - lastSent >= 1000 / SEND_HZ) {
      socket.send(encodeMessage(cmdMessage(cmd[0], cmd[1], cmd[2])));
      lastSent = now;
    }
  }

  function loop(now: number): void {
    sample(now);
    renderTop(topCtx, view);
    renderSide(sideCtx, view);
    renderHud(hud, view);
    requestAnimationFrame(loop);
  }
  requestAnimationFrame(loop);
}

window.addEventListener("load", main);
