import { describe, expect, it } from "vitest";

import {
  commandMessage,
  parseMessage,
  schemaIncompatible,
} from "../src/protocol.js";
import { telemetryJson } from "./helpers.js";

describe("parseMessage", () => {
  it("parses a valid telemetry frame", () => {
    const msg = parseMessage(telemetryJson());
    expect(msg?.type).toBe("telemetry");
    if (msg?.type === "telemetry") {
      expect(msg.metrics.cte).toBeCloseTo(0.12);
    }
  });

  it("rejects malformed JSON", () => {
    expect(parseMessage("{nope")).toBeNull();
  });

  it("rejects unknown message types", () => {
    expect(parseMessage(JSON.stringify({ type: "mystery" }))).toBeNull();
  });

  it("rejects telemetry missing core fields", () => {
    expect(parseMessage(JSON.stringify({ type: "telemetry" }))).toBeNull();
  });

  it("ignores unknown extra fields", () => {
    const msg = parseMessage(telemetryJson({ future_field: 42 }));
    expect(msg?.type).toBe("telemetry");
  });

  it("parses acks and errors", () => {
    const ack = parseMessage(
      JSON.stringify({ type: "ack", name: "set_max_speed", applies_at_tick: 7 }),
    );
    expect(ack?.type).toBe("ack");
    const err = parseMessage(JSON.stringify({ type: "error", message: "bad" }));
    expect(err?.type).toBe("error");
  });

  it("flags schema mismatches", () => {
    const msg = parseMessage(telemetryJson({ schema: "999" }));
    expect(msg?.type).toBe("telemetry");
    if (msg?.type === "telemetry") {
      expect(schemaIncompatible(msg)).toBe(true);
    }
  });
});

describe("commandMessage", () => {
  it("serializes per the wire format", () => {
    const parsed = JSON.parse(commandMessage("set_max_speed", 25.0));
    expect(parsed).toEqual({ type: "command", name: "set_max_speed", value: 25.0 });
  });
});
