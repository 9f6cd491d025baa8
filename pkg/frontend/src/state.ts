// Session view model: the latest authoritative frame plus the landing
// history. Landing metrics are stored and shown exactly as the server sent
// them; nothing is recomputed client-side.

import { LandedFrame, ServerFrame, StateFrame } from "./protocol.js";

export interface SessionView {
  latest: StateFrame | null;
  landings: LandedFrame[];
  warnings: string[];
  challengeMode: boolean;
}

export function emptyView(): SessionView {
  return { latest: null, landings: [], warnings: [], challengeMode: false };
}

export function applyFrame(view: SessionView, frame: ServerFrame): SessionView {
  if (frame.type === "state") {
    return { ...view, latest: frame };
  }
  if (frame.type === "landed") {
    return { ...view, landings: [...view.landings, frame] };
  }
  return { ...view, warnings: [...view.warnings.slice(-9), frame.message] };
}

export function landingLabel(frame: LandedFrame): string {
  // raw server values; toString keeps full precision
  const [x, y] = frame.landing_pos;
  return (
    `${frame.success ? "SUCCESS" : "FAIL"} at (${x}, ${y}) ` +
    `vh=${frame.landing_vh} vv=${frame.landing_vv} ` +
    `on_goal=${frame.on_goal} legs=${frame.all_legs_supported}`
  );
}

export interface ViewTransform {
  scale: number; // px per meter
  cx: number;    // px of world origin
  cy: number;
}

/** Top-down view: world XY (Y up) onto a canvas of w x h pixels. */
export function topTransform(bounds: number, w: number, h: number): ViewTransform {
  const scale = Math.min(w, h) / (2 * bounds * 1.05);
  return { scale, cx: w / 2, cy: h / 2 };
}

export function worldToTop(t: ViewTransform, x: number, y: number): [number, number] {
  return [t.cx + x * t.scale, t.cy - y * t.scale];
}

/** Side view: world XZ (Z up, ground at the bottom margin). */
export function sideTransform(bounds: number, zMax: number, w: number, h: number): ViewTransform {
  const scale = Math.min(w / (2 * bounds * 1.05), h / (zMax * 1.1));
  return { scale, cx: w / 2, cy: h - 8 };
}

export function worldToSide(t: ViewTransform, x: number, z: number): [number, number] {
  return [t.cx + x * t.scale, t.cy - z * t.scale];
}
