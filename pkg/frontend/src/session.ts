/**
 * Session state: the single reducer every panel renders from.
 *
 * The server is authoritative: commands show as pending until acked, and the
 * effective mode/speed always comes from telemetry, never from what the
 * operator asked for.
 */

import { RingBuffer } from "./ring.js";
import {
  AckMessage,
  CommandName,
  ServerMessage,
  StaticMessage,
  TelemetryMessage,
  parseMessage,
  schemaIncompatible,
} from "./protocol.js";

export type ConnectionStatus =
  | "connecting"
  | "connected"
  | "disconnected"
  | "incompatible";

export interface PendingCommand {
  name: CommandName;
  value: unknown;
  sentAt: number;
  ackedAtTick: number | null;
}

export interface Annotation {
  t: number;
  text: string;
}

export interface TimePoint {
  t: number;
  value: number;
}

const BUFFER_CAPACITY = 1200; // 60 s at 20 Hz
const ANNOTATION_CAPACITY = 50;

export class SessionState {
  status: ConnectionStatus = "connecting";
  staticData: StaticMessage | null = null;
  latest: TelemetryMessage | null = null;

  cte = new RingBuffer<TimePoint>(BUFFER_CAPACITY);
  speed = new RingBuffer<TimePoint>(BUFFER_CAPACITY);
  speedTarget = new RingBuffer<TimePoint>(BUFFER_CAPACITY);
  gap = new RingBuffer<TimePoint>(BUFFER_CAPACITY);
  gg = new RingBuffer<[number, number]>(BUFFER_CAPACITY);
  egoTrail = new RingBuffer<[number, number]>(BUFFER_CAPACITY);

  pending: PendingCommand[] = [];
  annotations = new RingBuffer<Annotation>(ANNOTATION_CAPACITY);
  framesReceived = 0;
  malformedDropped = 0;
  lastError: string | null = null;
  emergencyLatched = false;

  private lastGnss: string | null | undefined = undefined;
  private lastMode: string | undefined = undefined;
  private lastDeadReckoning = false;

  onRaw(raw: string): void {
    const msg = parseMessage(raw);
    if (msg === null) {
      this.malformedDropped += 1;
      return;
    }
    this.onMessage(msg);
  }

  onMessage(msg: ServerMessage): void {
    switch (msg.type) {
      case "static":
        if (schemaIncompatible(msg)) {
          this.status = "incompatible";
          return;
        }
        this.staticData = msg;
        break;
      case "telemetry":
        if (schemaIncompatible(msg)) {
          this.status = "incompatible";
          return;
        }
        this.onFrame(msg);
        break;
      case "ack":
        this.onAck(msg);
        break;
      case "error":
        this.lastError = msg.message;
        // drop the oldest unacked command: the server rejected it
        const idx = this.pending.findIndex((p) => p.ackedAtTick === null);
        if (idx >= 0) this.pending.splice(idx, 1);
        break;
    }
  }

  private onFrame(frame: TelemetryMessage): void {
    this.framesReceived += 1;
    this.latest = frame;
    const t = frame.t;
    this.cte.push({ t, value: frame.metrics.cte });
    this.speed.push({ t, value: frame.ego.v_x });
    this.speedTarget.push({ t, value: frame.metrics.v_target });
    if (frame.metrics.gap !== null && frame.metrics.gap !== undefined) {
      this.gap.push({ t, value: frame.metrics.gap });
    }
    this.gg.push([frame.metrics.a_y, frame.metrics.a_x]);
    this.egoTrail.push([frame.ego.x, frame.ego.y]);

    if (frame.metrics.active_gnss !== this.lastGnss) {
      if (this.lastGnss !== undefined) {
        this.annotations.push({
          t,
          text: `GNSS failover: ${this.lastGnss ?? "none"} -> ${frame.metrics.active_gnss ?? "none"}`,
        });
      }
      this.lastGnss = frame.metrics.active_gnss;
    }
    if (frame.metrics.dead_reckoning !== this.lastDeadReckoning) {
      this.annotations.push({
        t,
        text: frame.metrics.dead_reckoning
          ? "dead reckoning (all GNSS silent)"
          : "GNSS recovered",
      });
      this.lastDeadReckoning = frame.metrics.dead_reckoning;
    }
    if (frame.metrics.mode !== this.lastMode) {
      if (this.lastMode !== undefined) {
        this.annotations.push({
          t,
          text: `mode: ${this.lastMode} -> ${frame.metrics.mode} (${frame.metrics.reason})`,
        });
      }
      this.lastMode = frame.metrics.mode;
    }
    if (frame.metrics.reason === "emergency_stop") {
      this.emergencyLatched = true;
    }
  }

  /** Register a sent command; shown as pending until its ack arrives. */
  commandSent(name: CommandName, value: unknown, now: number): PendingCommand {
    const entry: PendingCommand = { name, value, sentAt: now, ackedAtTick: null };
    this.pending.push(entry);
    if (name === "emergency_stop" && value === false) {
      this.emergencyLatched = false; // operator reset
    }
    return entry;
  }

  private onAck(ack: AckMessage): void {
    const entry = this.pending.find(
      (p) => p.name === ack.name && p.ackedAtTick === null,
    );
    if (entry) {
      entry.ackedAtTick = ack.applies_at_tick;
    }
    // acked entries linger briefly for display; cap the list
    while (this.pending.length > 20) this.pending.shift();
  }

  /** Controls lock after an emergency stop, except the stop reset. */
  controlsLocked(): boolean {
    return this.emergencyLatched;
  }
}
