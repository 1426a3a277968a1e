// Wire protocol spoken by the session gateway: one JSON document per
// WebSocket text message, strict lockstep (one reply per request, plus one
// unsolicited obs right after connecting).

export const DV_MAX = 0.5;     // per-axis increment cap (volts per step)
export const DV_DETENT = 0.1;  // keyboard / slider granularity (volts)
export const V_MAX = 2.5;      // absolute per-axis voltage limit
export const PACE_HZ = 10;     // control rate the UI ticks at

export type Triple = [number, number, number];

export interface StateReadout {
  p: [number, number];
  psi: number;
  z: number;
  h: Triple;
  v: Triple;
  t: number;
}

export interface ObsMessage {
  type: "obs";
  t: number;
  obs_index: number;
  frames: string[]; // base64 PNG, oldest first
  state: StateReadout;
  instruction: string;
  recording: boolean;
  samples: number;
  clipped: boolean;
  applied_dv: Triple;
  eval_trial?: number;
  eval_step?: number;
}

export interface AckMessage {
  type: "ack";
  op: string;
  episode_dir?: string;
  samples?: number;
  text?: string;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export interface EvalResultMessage {
  type: "eval_result";
  motion_type: string;
  trials: number;
  successes: number;
  rate: number;
}

export type ServerMessage = ObsMessage | AckMessage | ErrorMessage | EvalResultMessage;

export type ClientMessage =
  | { type: "act"; dv: Triple }
  | { type: "act_tokens"; ids: number[] }
  | { type: "reset"; seed?: number; randomize_pose?: boolean; task_category?: string }
  | {
      type: "record_start";
      task_category?: string;
      instruction?: string;
      seed?: number;
      randomize_pose?: boolean;
    }
  | { type: "record_stop" }
  | { type: "set_instruction"; text: string }
  | { type: "eval"; primitive: string; trials?: number; base_seed?: number };

export class ProtocolError extends Error {}

export function parseServerMessage(text: string): ServerMessage {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new ProtocolError(`not JSON: ${String(err)}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new ProtocolError("message is not an object");
  }
  const msg = doc as Record<string, unknown>;
  switch (msg.type) {
    case "obs":
      if (!Array.isArray(msg.frames) || typeof msg.state !== "object" || msg.state === null) {
        throw new ProtocolError("malformed obs message");
      }
      return msg as unknown as ObsMessage;
    case "ack":
      return msg as unknown as AckMessage;
    case "error":
      return msg as unknown as ErrorMessage;
    case "eval_result":
      return msg as unknown as EvalResultMessage;
    default:
      throw new ProtocolError(`unknown server message type ${String(msg.type)}`);
  }
}

export function encodeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}

export function clampDv(dv: Triple): Triple {
  return dv.map((x) => Math.min(Math.max(x, -DV_MAX), DV_MAX)) as Triple;
}

// Snap a continuous control value onto the 0.1 V detent grid.
export function snapDetent(x: number): number {
  return Math.round(x / DV_DETENT) * DV_DETENT;
}

export interface AxisInputs {
  keys: Triple;    // -1 | 0 | +1 per axis from held keys
  sliders: Triple; // slider positions in volts
}

// One increment per tick: key detents plus slider offsets, snapped and
// clamped so the request is always feasible.
export function composeDv(inputs: AxisInputs): Triple {
  const raw = inputs.keys.map(
    (k, i) => k * DV_DETENT + snapDetent(inputs.sliders[i]),
  ) as Triple;
  return clampDv(raw.map(snapDetent) as Triple);
}
