import { describe, expect, it } from "vitest";

import { PROTOCOL_SCHEMA } from "../src/protocol.js";
import { SessionState } from "../src/session.js";
import { telemetryJson } from "./helpers.js";

function frameAt(t: number, overrides: Record<string, unknown> = {}): string {
  const base = JSON.parse(telemetryJson());
  base.t = t;
  base.tick = Math.round(t * 100);
  Object.assign(base.metrics, overrides);
  return JSON.stringify(base);
}

describe("SessionState", () => {
  it("updates buffers from frames", () => {
    const s = new SessionState();
    s.onRaw(frameAt(0.05));
    s.onRaw(frameAt(0.1, { cte: -0.4 }));
    expect(s.framesReceived).toBe(2);
    expect(s.cte.last()?.value).toBeCloseTo(-0.4);
    expect(s.latest?.t).toBeCloseTo(0.1);
  });

  it("keeps every buffer bounded over a 60 s soak at 20 Hz", () => {
    const s = new SessionState();
    for (let i = 0; i < 20 * 60 * 3; i++) {
      s.onRaw(frameAt(i * 0.05, { gap: 25.0 }));
    }
    for (const buffer of [s.cte, s.speed, s.speedTarget, s.gap, s.gg, s.egoTrail]) {
      expect(buffer.length).toBeLessThanOrEqual(1200);
    }
    expect(s.annotations.length).toBeLessThanOrEqual(50);
    expect(s.framesReceived).toBe(3600);
  });

  it("counts malformed frames without crashing", () => {
    const s = new SessionState();
    s.onRaw("{broken");
    s.onRaw(JSON.stringify({ type: "telemetry" }));
    expect(s.malformedDropped).toBe(2);
    expect(s.latest).toBeNull();
  });

  it("matches acks to pending commands in order", () => {
    const s = new SessionState();
    const a = s.commandSent("set_max_speed", 20.0, 0);
    const b = s.commandSent("set_max_speed", 25.0, 1);
    s.onRaw(JSON.stringify({ type: "ack", name: "set_max_speed", applies_at_tick: 42 }));
    expect(a.ackedAtTick).toBe(42);
    expect(b.ackedAtTick).toBeNull();
  });

  it("drops a pending command on a server error reply", () => {
    const s = new SessionState();
    s.commandSent("set_max_speed", -5, 0);
    s.onRaw(JSON.stringify({ type: "error", message: "rejected" }));
    expect(s.pending.length).toBe(0);
    expect(s.lastError).toBe("rejected");
  });

  it("annotates failover and mode transitions", () => {
    const s = new SessionState();
    s.onRaw(frameAt(0.05, { active_gnss: "top" }));
    s.onRaw(frameAt(0.1, { active_gnss: "side" }));
    s.onRaw(frameAt(0.15, { mode: "attack", reason: "attack_authorized" }));
    const texts = s.annotations.toArray().map((a) => a.text);
    expect(texts.some((t) => t.includes("top -> side"))).toBe(true);
    expect(texts.some((t) => t.includes("follow -> attack"))).toBe(true);
  });

  it("locks controls after an emergency stop until reset", () => {
    const s = new SessionState();
    s.onRaw(frameAt(0.05, { reason: "emergency_stop" }));
    expect(s.controlsLocked()).toBe(true);
    s.commandSent("emergency_stop", false, 1);
    expect(s.controlsLocked()).toBe(false);
  });

  it("shows the incompatibility banner state on schema mismatch", () => {
    const s = new SessionState();
    const raw = JSON.parse(telemetryJson());
    raw.schema = "2";
    s.onRaw(JSON.stringify(raw));
    expect(s.status).toBe("incompatible");
  });

  it("accepts the static map message", () => {
    const s = new SessionState();
    s.onRaw(JSON.stringify({
      type: "static", schema: PROTOCOL_SCHEMA, scenario: "demo",
      outer_boundary: [[0, 0], [10, 0], [10, 10]],
      inner_boundary: [], raceline: [],
    }));
    expect(s.staticData?.scenario).toBe("demo");
  });
});
