// Wire types of the session server. The UI constructs client messages only
// through the helpers below, so everything sent stays inside the documented
// protocol, and displays server values verbatim (no client-side physics).

export type Vec3 = [number, number, number];

export interface Platform {
  id: number;
  center: [number, number];
  half_extent: number;
  height: number;
}

export interface StateFrame {
  type: "state";
  t: number;
  pos: Vec3;
  vel: Vec3;
  assist: boolean;
  platforms: Platform[];
  goal: number;
  a_u: Vec3;
  a_a: Vec3;
}

export interface LandedFrame {
  type: "landed";
  landing_pos: [number, number];
  landing_vh: number;
  landing_vv: number;
  on_goal: boolean;
  all_legs_supported: boolean;
  success: boolean;
  phase?: string;
}

export interface WarningFrame {
  type: "warning";
  message: string;
}

export type ServerFrame = StateFrame | LandedFrame | WarningFrame;

export interface CmdMessage {
  type: "cmd";
  vx: number;
  vy: number;
  vz: number;
}

export interface AssistMessage {
  type: "assist";
  on: boolean;
}

export interface ResetMessage {
  type: "reset";
  seed: number;
  goal: number;
}

export type ClientMessage = CmdMessage | AssistMessage | ResetMessage;

export const CLIENT_MESSAGE_TYPES = ["cmd", "assist", "reset"] as const;

export const MAX_SPEED = 1.2; // m/s, per-axis command range

const clampAxis = (v: number): number => {
  if (!Number.isFinite(v)) return 0;
  return Math.max(-MAX_SPEED, Math.min(MAX_SPEED, v));
};

export function cmdMessage(vx: number, vy: number, vz: number): CmdMessage {
  return { type: "cmd", vx: clampAxis(vx), vy: clampAxis(vy), vz: clampAxis(vz) };
}

export function assistMessage(on: boolean): AssistMessage {
  return { type: "assist", on };
}

export function resetMessage(seed: number, goal: number): ResetMessage {
  return { type: "reset", seed: Math.max(0, Math.floor(seed)), goal: Math.max(0, Math.floor(goal)) };
}

export function encodeMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}

export function parseServerFrame(text: string): ServerFrame | null {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const frame = obj as { type?: string };
  if (frame.type === "state" || frame.type === "landed" || frame.type === "warning") {
    return obj as ServerFrame;
  }
  return null;
}
