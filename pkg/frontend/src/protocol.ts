/**
 * Wire protocol types and parsing.
 *
 * Every displayed number traces to a field defined here; the dashboard does
 * no physics of its own. Unknown fields are ignored, unknown message types
 * are dropped (counted by the session).
 */

export const PROTOCOL_SCHEMA = "1";

export interface EgoState {
  x: number;
  y: number;
  yaw: number;
  v_x: number;
  v_y: number;
  r: number;
  gear: number;
  rpm: number;
}

export interface EstState {
  x: number;
  y: number;
  yaw: number;
  v_x: number;
  v_y: number;
  cov_trace?: number;
}

export interface OppState {
  truth_x?: number;
  truth_y?: number;
  truth_v?: number;
  track_x?: number;
  track_y?: number;
  track_v?: number;
  v_smoothed?: number;
  stopped?: boolean;
  time_since_update?: number;
}

export interface FrameMetrics {
  cte: number;
  heading_error: number;
  s: number;
  v_target: number;
  gap: number | null;
  mode: string;
  reason: string;
  active_gnss: string | null;
  dead_reckoning: boolean;
  a_x: number;
  a_y: number;
  lambdas: number[];
  alpha_f: number;
  alpha_r: number;
  steering: number;
  throttle: number;
  brake: number;
  gear: number;
}

export interface TelemetryMessage {
  type: "telemetry";
  schema: string;
  tick: number;
  t: number;
  ego: EgoState;
  est: EstState;
  opp: OppState | null;
  metrics: FrameMetrics;
}

export interface StaticMessage {
  type: "static";
  schema: string;
  scenario: string;
  outer_boundary: [number, number][];
  inner_boundary: [number, number][];
  raceline: [number, number][];
}

export interface AckMessage {
  type: "ack";
  name: string;
  applies_at_tick: number;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage =
  | TelemetryMessage
  | StaticMessage
  | AckMessage
  | ErrorMessage;

export type CommandName =
  | "set_max_speed"
  | "set_attack_permitted"
  | "emergency_stop"
  | "inject_gnss_dropout";

export function commandMessage(name: CommandName, value: unknown): string {
  return JSON.stringify({ type: "command", name, value });
}

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

/** Parse a raw server message; null for anything malformed. */
export function parseMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as Record<string, unknown>;
  switch (msg.type) {
    case "telemetry": {
      if (!isFiniteNumber(msg.tick) || !isFiniteNumber(msg.t)) return null;
      if (typeof msg.ego !== "object" || msg.ego === null) return null;
      if (typeof msg.metrics !== "object" || msg.metrics === null) return null;
      const ego = msg.ego as Record<string, unknown>;
      if (!isFiniteNumber(ego.x) || !isFiniteNumber(ego.y)) return null;
      return msg as unknown as TelemetryMessage;
    }
    case "static": {
      if (!Array.isArray(msg.outer_boundary)) return null;
      return msg as unknown as StaticMessage;
    }
    case "ack": {
      if (typeof msg.name !== "string" || !isFiniteNumber(msg.applies_at_tick))
        return null;
      return msg as unknown as AckMessage;
    }
    case "error": {
      if (typeof msg.message !== "string") return null;
      return msg as unknown as ErrorMessage;
    }
    default:
      return null;
  }
}

/** True when the server speaks a schema this client does not understand. */
export function schemaIncompatible(msg: TelemetryMessage | StaticMessage): boolean {
  return msg.schema !== undefined && msg.schema !== PROTOCOL_SCHEMA;
}
