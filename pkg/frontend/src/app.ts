/** Dashboard wiring: connection, panels, command controls. */

import { drawMap } from "./map.js";
import { drawScatter, drawTimeSeries } from "./plots.js";
import { commandMessage } from "./protocol.js";
import { SessionState } from "./session.js";
import { LiveConnection } from "./socket.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(): void {
  const params = new URLSearchParams(window.location.search);
  const url = params.get("ws") ?? "ws://127.0.0.1:8700";

  const session = new SessionState();
  const statusEl = el<HTMLSpanElement>("status");
  const infoEl = el<HTMLDivElement>("info");
  const pendingEl = el<HTMLUListElement>("pending");
  const annotationsEl = el<HTMLUListElement>("annotations");

  const connection = new LiveConnection(url, {
    onStatus: (s) => {
      if (session.status !== "incompatible") session.status = s;
    },
    onMessage: (raw) => session.onRaw(raw),
  });
  connection.connect();

  const send = (name: Parameters<typeof commandMessage>[0], value: unknown) => {
    if (session.controlsLocked() && name !== "emergency_stop") return;
    if (connection.send(commandMessage(name, value))) {
      session.commandSent(name, value, performance.now());
    }
  };

  const speedSlider = el<HTMLInputElement>("max-speed");
  const speedLabel = el<HTMLSpanElement>("max-speed-value");
  speedSlider.addEventListener("change", () => {
    speedLabel.textContent = speedSlider.value;
    send("set_max_speed", Number(speedSlider.value));
  });
  speedSlider.addEventListener("input", () => {
    speedLabel.textContent = speedSlider.value;
  });

  el<HTMLInputElement>("attack").addEventListener("change", (ev) => {
    send("set_attack_permitted", (ev.target as HTMLInputElement).checked);
  });
  el<HTMLButtonElement>("estop").addEventListener("click", () => {
    send("emergency_stop", true);
  });
  el<HTMLButtonElement>("estop-reset").addEventListener("click", () => {
    send("emergency_stop", false);
  });
  el<HTMLButtonElement>("dropout").addEventListener("click", () => {
    send("inject_gnss_dropout", { source: "top", duration: 2.0 });
  });

  const mapCanvas = el<HTMLCanvasElement>("map");
  const cteCanvas = el<HTMLCanvasElement>("cte-plot");
  const speedCanvas = el<HTMLCanvasElement>("speed-plot");
  const gapCanvas = el<HTMLCanvasElement>("gap-plot");
  const ggCanvas = el<HTMLCanvasElement>("gg-plot");

  function render(): void {
    statusEl.textContent = session.status;
    statusEl.className = `status ${session.status}`;
    el<HTMLDivElement>("banner").style.display =
      session.status === "incompatible" ? "block" : "none";

    const locked = session.controlsLocked();
    speedSlider.disabled = locked;
    el<HTMLInputElement>("attack").disabled = locked;
    el<HTMLButtonElement>("dropout").disabled = locked;

    const frame = session.latest;
    if (frame) {
      const m = frame.metrics;
      infoEl.textContent =
        `t=${frame.t.toFixed(2)}s  v=${frame.ego.v_x.toFixed(1)} m/s ` +
        `(target ${m.v_target.toFixed(1)})  gear ${m.gear}  ` +
        `mode ${m.mode}  gnss ${m.active_gnss ?? "NONE"}` +
        `${m.dead_reckoning ? " [DEAD RECKONING]" : ""}  ` +
        `gap ${m.gap === null ? "-" : m.gap.toFixed(1) + " m"}  ` +
        `frames ${session.framesReceived}  dropped ${session.malformedDropped}`;
    }
    if (session.staticData) {
      drawMap(mapCanvas, session.staticData, frame, session.egoTrail.toArray());
    }
    drawTimeSeries(cteCanvas, [
      { points: session.cte.toArray(), color: "#7ec8e3", label: "cte (m)" },
    ], { window: 30, yLabel: "cross-track error" });
    drawTimeSeries(speedCanvas, [
      { points: session.speed.toArray(), color: "#3f8efc", label: "v" },
      { points: session.speedTarget.toArray(), color: "#f0c850", label: "target" },
    ], { window: 30, yLabel: "speed (m/s)" });
    drawTimeSeries(gapCanvas, [
      { points: session.gap.toArray(), color: "#d4553f", label: "gap (m)" },
    ], { window: 30, yLabel: "curvilinear gap" });
    drawScatter(ggCanvas, session.gg.toArray(),
                { xLabel: "a_y", yLabel: "a_x", range: 12 });

    pendingEl.innerHTML = "";
    for (const p of session.pending.slice(-6)) {
      const li = document.createElement("li");
      li.textContent = `${p.name}=${JSON.stringify(p.value)} ` +
        (p.ackedAtTick === null ? "(pending)" : `@tick ${p.ackedAtTick}`);
      li.className = p.ackedAtTick === null ? "pending" : "acked";
      pendingEl.appendChild(li);
    }
    annotationsEl.innerHTML = "";
    for (const a of session.annotations.toArray().slice(-8)) {
      const li = document.createElement("li");
      li.textContent = `${a.t.toFixed(2)}s  ${a.text}`;
      annotationsEl.appendChild(li);
    }
    if (session.lastError) {
      el<HTMLDivElement>("server-error").textContent =
        `server: ${session.lastError}`;
    }
    requestAnimationFrame(render);
  }
  requestAnimationFrame(render);
}

startApp();
