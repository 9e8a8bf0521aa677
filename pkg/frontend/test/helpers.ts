import { PROTOCOL_SCHEMA } from "../src/protocol.js";

export function telemetryJson(overrides: Record<string, unknown> = {}): string {
  return JSON.stringify({
    type: "telemetry",
    schema: PROTOCOL_SCHEMA,
    tick: 100,
    t: 1.0,
    ego: { x: 1.0, y: 2.0, yaw: 0.1, v_x: 20.0, v_y: 0.0, r: 0.0, gear: 3, rpm: 4000 },
    est: { x: 1.0, y: 2.0, yaw: 0.1, v_x: 20.0, v_y: 0.0 },
    opp: null,
    metrics: {
      cte: 0.12, heading_error: 0.01, s: 55.0, v_target: 22.0, gap: null,
      mode: "follow", reason: "free_run", active_gnss: "top",
      dead_reckoning: false, a_x: 0.0, a_y: 1.0,
      lambdas: [0, 0, 0, 0], alpha_f: 0.0, alpha_r: 0.0,
      steering: 0.0, throttle: 0.2, brake: 0.0, gear: 3,
    },
    ...overrides,
  });
}
