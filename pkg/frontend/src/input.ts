// Pilot input: gamepad sticks map linearly (after a deadzone) onto XYZ
// velocities; held keys integrate a ramp toward full deflection and decay
// back when released.

import { MAX_SPEED, Vec3 } from "./protocol.js";

export interface InputMapping {
  deadzone: number;     // stick magnitude below which an axis reads 0
  rampRate: number;     // m/s per second a held key adds
  maxSpeed: number;
}

export const DEFAULT_MAPPING: InputMapping = {
  deadzone: 0.08,
  rampRate: 1.6,
  maxSpeed: MAX_SPEED,
};

export function applyDeadzone(v: number, deadzone: number): number {
  const a = Math.abs(v);
  if (a < deadzone) return 0;
  const rescaled = (a - deadzone) / (1 - deadzone);
  return Math.sign(v) * Math.min(1, rescaled);
}

/** Gamepad axes [x, y, z] in [-1, 1] to a velocity command. */
export function gamepadToCmd(axes: Vec3, mapping: InputMapping = DEFAULT_MAPPING): Vec3 {
  return [
    applyDeadzone(axes[0], mapping.deadzone) * mapping.maxSpeed,
    applyDeadzone(axes[1], mapping.deadzone) * mapping.maxSpeed,
    applyDeadzone(axes[2], mapping.deadzone) * mapping.maxSpeed,
  ];
}

export interface KeyAxes {
  x: number; // -1, 0, +1 key direction per axis
  y: number;
  z: number;
}

export function keysToAxes(pressed: Set<string>): KeyAxes {
  const axis = (pos: string, neg: string) =>
    (pressed.has(pos) ? 1 : 0) - (pressed.has(neg) ? 1 : 0);
  return {
    x: axis("KeyW", "KeyS"),
    y: axis("KeyD", "KeyA"),
    z: axis("KeyR", "KeyF"),
  };
}

/** One input tick: integrate held keys toward full speed, decay released axes. */
export function rampCmd(
  prev: Vec3,
  axes: KeyAxes,
  dtSeconds: number,
  mapping: InputMapping = DEFAULT_MAPPING
): Vec3 {
  const step = mapping.rampRate * dtSeconds;
  const one = (v: number, dir: number): number => {
    if (dir !== 0) {
      const target = dir * mapping.maxSpeed;
      const d = target - v;
      return Math.abs(d) <= step ? target : v + Math.sign(d) * step;
    }
    // released: ramp back toward zero
    return Math.abs(v) <= step ? 0 : v - Math.sign(v) * step;
  };
  return [one(prev[0], axes.x), one(prev[1], axes.y), one(prev[2], axes.z)];
}
