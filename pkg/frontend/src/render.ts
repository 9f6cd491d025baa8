// Canvas rendering: a top-down XY panel and a side XZ panel. Challenge mode
// replaces the side panel's depth axis with a bare altitude gauge to mimic
// flying without depth perception.

import { StateFrame } from "./protocol.js";
import {
  SessionView,
  sideTransform,
  topTransform,
  worldToSide,
  worldToTop,
} from "./state.js";

const BOUNDS_FALLBACK = 3.4;

function worldBounds(frame: StateFrame): number {
  let b = BOUNDS_FALLBACK;
  for (const p of frame.platforms) {
    b = Math.max(b, Math.abs(p.center[0]) + p.half_extent, Math.abs(p.center[1]) + p.half_extent);
  }
  return Math.max(b, BOUNDS_FALLBACK);
}

export function renderTop(ctx: CanvasRenderingContext2D, view: SessionView): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10141c";
  ctx.fillRect(0, 0, width, height);
  const frame = view.latest;
  if (!frame) return;
  const t = topTransform(worldBounds(frame), width, height);

  for (const p of frame.platforms) {
    const [px, py] = worldToTop(t, p.center[0], p.center[1]);
    const s = p.half_extent * t.scale;
    ctx.fillStyle = p.id === frame.goal ? "#2c5f2d" : "#3a4152";
    ctx.fillRect(px - s, py - s, 2 * s, 2 * s);
    ctx.strokeStyle = "#9aa3b5";
    ctx.strokeRect(px - s, py - s, 2 * s, 2 * s);
    ctx.fillStyle = "#d8dde8";
    ctx.font = "11px monospace";
    ctx.textAlign = "center";
    ctx.fillText(String(p.id), px, py + 4);
  }
  const goal = frame.platforms[frame.goal];
  if (goal) {
    const [gx, gy] = worldToTop(t, goal.center[0], goal.center[1]);
    ctx.strokeStyle = "#6fe06f";
    ctx.beginPath();
    ctx.arc(gx, gy, goal.half_extent * t.scale + 6, 0, 2 * Math.PI);
    ctx.stroke();
  }
  const [ux, uy] = worldToTop(t, frame.pos[0], frame.pos[1]);
  ctx.fillStyle = frame.assist ? "#58b7ff" : "#ffb84d";
  ctx.beginPath();
  ctx.arc(ux, uy, 6, 0, 2 * Math.PI);
  ctx.fill();
  ctx.strokeStyle = ctx.fillStyle;
  ctx.beginPath();
  ctx.moveTo(ux, uy);
  ctx.lineTo(ux + frame.vel[0] * t.scale, uy - frame.vel[1] * t.scale);
  ctx.stroke();
}

export function renderSide(ctx: CanvasRenderingContext2D, view: SessionView): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10141c";
  ctx.fillRect(0, 0, width, height);
  const frame = view.latest;
  if (!frame) return;

  if (view.challengeMode) {
    // altitude gauge only: no depth-axis information
    const zMax = 2.5;
    const frac = Math.min(1, Math.max(0, frame.pos[2] / zMax));
    ctx.fillStyle = "#3a4152";
    ctx.fillRect(width / 2 - 12, 8, 24, height - 16);
    ctx.fillStyle = "#58b7ff";
    const barH = (height - 16) * frac;
    ctx.fillRect(width / 2 - 12, 8 + (height - 16) - barH, 24, barH);
    ctx.fillStyle = "#d8dde8";
    ctx.font = "12px monospace";
    ctx.textAlign = "center";
    ctx.fillText(`alt ${frame.pos[2].toFixed(2)} m`, width / 2, height - 2);
    return;
  }

  const t = sideTransform(worldBounds(frame), 2.5, width, height);
  ctx.strokeStyle = "#4c5568";
  const [g0x, g0y] = worldToSide(t, -worldBounds(frame), 0);
  const [g1x] = worldToSide(t, worldBounds(frame), 0);
  ctx.beginPath();
  ctx.moveTo(g0x, g0y);
  ctx.lineTo(g1x, g0y);
  ctx.stroke();
  for (const p of frame.platforms) {
    const [px, py] = worldToSide(t, p.center[0], p.height);
    const s = p.half_extent * t.scale;
    ctx.fillStyle = p.id === frame.goal ? "#2c5f2d" : "#3a4152";
    ctx.fillRect(px - s, py, 2 * s, g0y - py);
  }
  const [ux, uz] = worldToSide(t, frame.pos[0], frame.pos[2]);
  ctx.fillStyle = frame.assist ? "#58b7ff" : "#ffb84d";
  ctx.beginPath();
  ctx.arc(ux, uz, 5, 0, 2 * Math.PI);
  ctx.fill();
}

export function renderHud(el: HTMLElement, view: SessionView): void {
  const frame = view.latest;
  if (!frame) {
    el.textContent = "connecting...";
    return;
  }
  const [x, y, z] = frame.pos;
  el.textContent =
    `t=${frame.t.toFixed(1)}s  pos(${x.toFixed(2)}, ${y.toFixed(2)}, ${z.toFixed(2)})  ` +
    `assist ${frame.assist ? "ON" : "off"}  goal #${frame.goal}`;
}
