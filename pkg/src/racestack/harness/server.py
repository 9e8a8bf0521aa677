"""Live telemetry over WebSocket: JSON frames out, operator commands in.

The simulation thread stays authoritative: frames flow through bounded
per-client queues (dropping oldest under backpressure), and commands are
queued into the runner to apply at the next tick boundary, acknowledged with
the tick at which they take effect. Closing or attaching clients never
changes a run's outcome; accepted commands are part of the run log.
"""

from __future__ import annotations

import json
import queue
import threading

import numpy as np

from websockets.sync.server import serve

PROTOCOL_SCHEMA = "1"
VALID_COMMANDS = ("set_max_speed", "set_attack_permitted", "emergency_stop",
                  "inject_gnss_dropout")


def frame_message(frame) -> dict:
    return {
        "type": "telemetry",
        "schema": PROTOCOL_SCHEMA,
        "tick": frame.tick,
        "t": frame.t,
        "ego": frame.ego,
        "est": frame.est,
        "opp": frame.opp,
        "metrics": {
            "cte": frame.frenet["d"],
            "heading_error": frame.frenet["heading_error"],
            "s": frame.frenet["s"],
            "v_target": frame.v_target,
            "gap": frame.gap,
            "mode": frame.mode,
            "reason": frame.reason,
            "active_gnss": frame.active_gnss,
            "dead_reckoning": frame.dead_reckoning,
            "a_x": frame.a_x,
            "a_y": frame.a_y,
            "lambdas": frame.lambdas,
            "alpha_f": frame.alpha_f,
            "alpha_r": frame.alpha_r,
            "steering": frame.cmd["steering"],
            "throttle": frame.cmd["throttle"],
            "brake": frame.cmd["brake"],
            "gear": frame.cmd["gear"],
        },
    }


def static_message(track, raceline, scenario_name: str) -> dict:
    def poly(arr, step=4):
        return np.asarray(arr)[::step].round(2).tolist()

    return {
        "type": "static",
        "schema": PROTOCOL_SCHEMA,
        "scenario": scenario_name,
        "outer_boundary": poly(track.outer_boundary),
        "inner_boundary": poly(track.inner_boundary) if track.inner_boundary.size else [],
        "raceline": poly(np.column_stack([raceline.x, raceline.y]), step=8),
    }


class _Client:
    def __init__(self, conn, max_buffer=256):
        self.conn = conn
        self.outbox: queue.Queue = queue.Queue(maxsize=max_buffer)
        self.alive = True

    def offer(self, text: str):
        # drop the oldest frame instead of blocking the simulation
        while True:
            try:
                self.outbox.put_nowait(text)
                return
            except queue.Full:
                try:
                    self.outbox.get_nowait()
                except queue.Empty:
                    pass


class TelemetryServer:
    """Serves one simulation run (live or replay) to any number of clients."""

    def __init__(self, port: int, runner=None, frame_rate_hz: float = 20.0,
                 tick_rate_hz: float = 100.0):
        self.port = port
        self.runner = runner
        self.decimation = max(int(round(tick_rate_hz / frame_rate_hz)), 1)
        self.clients: set[_Client] = set()
        self._lock = threading.Lock()
        self._static_text: str | None = None
        self._server = None
        self._thread = None

    # -- simulation side ---------------------------------------------------

    def set_static(self, track, raceline, scenario_name: str):
        self._static_text = json.dumps(static_message(track, raceline,
                                                      scenario_name))

    def on_frame(self, frame):
        if frame.tick % self.decimation != 0:
            return
        text = json.dumps(frame_message(frame))
        with self._lock:
            for client in list(self.clients):
                client.offer(text)

    # -- client handling ---------------------------------------------------

    def _reply(self, client: _Client, payload: dict):
        client.offer(json.dumps(payload))

    def _handle_command(self, client: _Client, raw: str):
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            self._reply(client, {"type": "error", "message": "invalid JSON"})
            return
        if not isinstance(msg, dict) or msg.get("type") != "command":
            self._reply(client, {"type": "error",
                                 "message": "expected a command message"})
            return
        name = msg.get("name")
        if name not in VALID_COMMANDS:
            self._reply(client, {"type": "error",
                                 "message": f"unknown command {name!r}"})
            return
        if self.runner is None:
            self._reply(client, {"type": "error",
                                 "message": "replay session: commands ignored"})
            return
        try:
            tick = self.runner.queue_command(name, msg.get("value"))
        except Exception as exc:  # validation errors surface as nacks
            self._reply(client, {"type": "error", "message": str(exc)})
            return
        self._reply(client, {"type": "ack", "name": name,
                             "applies_at_tick": tick})

    def _sender(self, client: _Client):
        while client.alive:
            try:
                text = client.outbox.get(timeout=0.25)
            except queue.Empty:
                continue
            try:
                client.conn.send(text)
            except Exception:
                client.alive = False

    def _handler(self, conn):
        client = _Client(conn)
        if self._static_text is not None:
            client.offer(self._static_text)
        with self._lock:
            self.clients.add(client)
        sender = threading.Thread(target=self._sender, args=(client,),
                                  daemon=True)
        sender.start()
        try:
            for raw in conn:
                self._handle_command(client, raw)
        except Exception:
            pass
        finally:
            client.alive = False
            with self._lock:
                self.clients.discard(client)

    # -- lifecycle -----------------------------------------------------------

    def start(self):
        self._server = serve(self._handler, host="127.0.0.1", port=self.port)
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
        with self._lock:
            for client in self.clients:
                client.alive = False
            self.clients.clear()
