import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { LiveConnection, WebSocketLike } from "../src/socket.js";

class FakeSocket implements WebSocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }
}

describe("LiveConnection", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  function setup() {
    const sockets: FakeSocket[] = [];
    const statuses: string[] = [];
    const messages: string[] = [];
    const conn = new LiveConnection(
      "ws://test",
      {
        onStatus: (s) => statuses.push(s),
        onMessage: (m) => messages.push(m),
      },
      () => {
        const s = new FakeSocket();
        sockets.push(s);
        return s;
      },
    );
    return { conn, sockets, statuses, messages };
  }

  it("reports connected and dispatches messages", () => {
    const { conn, sockets, statuses, messages } = setup();
    conn.connect();
    sockets[0].onopen?.();
    sockets[0].onmessage?.({ data: "hello" });
    expect(statuses).toEqual(["connecting", "connected"]);
    expect(messages).toEqual(["hello"]);
    expect(conn.send("cmd")).toBe(true);
    expect(sockets[0].sent).toEqual(["cmd"]);
  });

  it("reconnects with exponential backoff after drops", () => {
    const { conn, sockets, statuses } = setup();
    conn.connect();
    sockets[0].onopen?.();
    sockets[0].onclose?.();           // server drops
    expect(statuses.at(-1)).toBe("disconnected");

    vi.advanceTimersByTime(500);      // first retry
    expect(sockets.length).toBe(2);
    sockets[1].onclose?.();           // fails again
    vi.advanceTimersByTime(500);      // too early for the doubled delay
    expect(sockets.length).toBe(2);
    vi.advanceTimersByTime(500);      // 1000 ms total
    expect(sockets.length).toBe(3);

    sockets[2].onopen?.();            // success resets the backoff
    expect(statuses.at(-1)).toBe("connected");
    sockets[2].onclose?.();
    vi.advanceTimersByTime(500);
    expect(sockets.length).toBe(4);
  });

  it("caps the backoff delay", () => {
    const { conn, sockets } = setup();
    conn.connect();
    for (let i = 0; i < 10; i++) {
      sockets.at(-1)!.onclose?.();
      vi.advanceTimersByTime(8000);
    }
    expect(conn.currentBackoffMs).toBeLessThanOrEqual(8000);
  });

  it("stops reconnecting after close()", () => {
    const { conn, sockets } = setup();
    conn.connect();
    sockets[0].onopen?.();
    conn.close();
    vi.advanceTimersByTime(60_000);
    expect(sockets.length).toBe(1);
  });
});
