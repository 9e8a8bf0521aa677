/** Track map in track-local coordinates, fixed north-up orientation. */

import { StaticMessage, TelemetryMessage } from "./protocol.js";

interface Bounds {
  minX: number;
  maxX: number;
  minY: number;
  maxY: number;
}

function boundsOf(pts: [number, number][]): Bounds {
  const xs = pts.map((p) => p[0]);
  const ys = pts.map((p) => p[1]);
  return {
    minX: Math.min(...xs),
    maxX: Math.max(...xs),
    minY: Math.min(...ys),
    maxY: Math.max(...ys),
  };
}

export function drawMap(
  canvas: HTMLCanvasElement,
  staticData: StaticMessage,
  frame: TelemetryMessage | null,
  trail: [number, number][],
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#0c0f14";
  ctx.fillRect(0, 0, width, height);

  const b = boundsOf(staticData.outer_boundary);
  const margin = 18;
  const scale = Math.min(
    (width - 2 * margin) / (b.maxX - b.minX),
    (height - 2 * margin) / (b.maxY - b.minY),
  );
  const toX = (x: number) => margin + (x - b.minX) * scale;
  const toY = (y: number) => height - margin - (y - b.minY) * scale;

  const poly = (pts: [number, number][], color: string) => {
    if (pts.length < 2) return;
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.2;
    ctx.beginPath();
    pts.forEach(([x, y], i) => {
      if (i === 0) ctx.moveTo(toX(x), toY(y));
      else ctx.lineTo(toX(x), toY(y));
    });
    ctx.closePath();
    ctx.stroke();
  };

  poly(staticData.outer_boundary, "#5a657d");
  poly(staticData.inner_boundary, "#5a657d");
  if (staticData.raceline.length > 1) {
    ctx.strokeStyle = "#304a78";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    staticData.raceline.forEach(([x, y], i) => {
      if (i === 0) ctx.moveTo(toX(x), toY(y));
      else ctx.lineTo(toX(x), toY(y));
    });
    ctx.stroke();
    ctx.setLineDash([]);
  }

  ctx.strokeStyle = "#3f8efc";
  ctx.beginPath();
  trail.forEach(([x, y], i) => {
    if (i === 0) ctx.moveTo(toX(x), toY(y));
    else ctx.lineTo(toX(x), toY(y));
  });
  ctx.stroke();

  if (frame) {
    const marker = (
      x: number,
      y: number,
      yaw: number | null,
      color: string,
      size: number,
    ) => {
      ctx.fillStyle = color;
      if (yaw === null) {
        ctx.beginPath();
        ctx.arc(toX(x), toY(y), size, 0, 2 * Math.PI);
        ctx.fill();
        return;
      }
      ctx.save();
      ctx.translate(toX(x), toY(y));
      ctx.rotate(-yaw);
      ctx.beginPath();
      ctx.moveTo(size * 1.8, 0);
      ctx.lineTo(-size, size * 0.8);
      ctx.lineTo(-size, -size * 0.8);
      ctx.closePath();
      ctx.fill();
      ctx.restore();
    };
    marker(frame.ego.x, frame.ego.y, frame.ego.yaw, "#3f8efc", 6);
    marker(frame.est.x, frame.est.y, frame.est.yaw, "rgba(240,200,80,0.8)", 4);
    const opp = frame.opp;
    if (opp && opp.truth_x !== undefined && opp.truth_y !== undefined) {
      marker(opp.truth_x, opp.truth_y, null, "#d4553f", 5);
    }
    if (opp && opp.track_x !== undefined && opp.track_y !== undefined) {
      ctx.strokeStyle = "#ff9d80";
      ctx.beginPath();
      ctx.arc(toX(opp.track_x), toY(opp.track_y!), 8, 0, 2 * Math.PI);
      ctx.stroke();
    }
  }
}
