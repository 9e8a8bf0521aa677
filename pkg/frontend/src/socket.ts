/**
 * WebSocket wrapper with exponential-backoff reconnection.
 *
 * The socket factory is injectable so tests drive the connection lifecycle
 * with a fake transport.
 */

export interface WebSocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => WebSocketLike;

export interface ConnectionEvents {
  onStatus: (status: "connecting" | "connected" | "disconnected") => void;
  onMessage: (raw: string) => void;
}

const BACKOFF_INITIAL_MS = 500;
const BACKOFF_MAX_MS = 8000;

export class LiveConnection {
  private socket: WebSocketLike | null = null;
  private backoffMs = BACKOFF_INITIAL_MS;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly events: ConnectionEvents,
    private readonly factory: SocketFactory = (u) =>
      new WebSocket(u) as unknown as WebSocketLike,
  ) {}

  connect(): void {
    if (this.closed) return;
    this.events.onStatus("connecting");
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.backoffMs = BACKOFF_INITIAL_MS;
      this.events.onStatus("connected");
    };
    sock.onmessage = (ev) => this.events.onMessage(ev.data);
    sock.onclose = () => this.scheduleReconnect();
    sock.onerror = () => {
      try {
        sock.close();
      } catch {
        /* already closed */
      }
    };
  }

  private scheduleReconnect(): void {
    if (this.closed) return;
    this.events.onStatus("disconnected");
    this.timer = setTimeout(() => this.connect(), this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_MAX_MS);
  }

  get currentBackoffMs(): number {
    return this.backoffMs;
  }

  send(data: string): boolean {
    if (!this.socket) return false;
    try {
      this.socket.send(data);
      return true;
    } catch {
      return false;
    }
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
  }
}
