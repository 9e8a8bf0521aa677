/** Minimal canvas plotting: time-series strips and a scatter panel. */

import { TimePoint } from "./session.js";

export interface Series {
  points: TimePoint[];
  color: string;
  label: string;
}

export function drawTimeSeries(
  canvas: HTMLCanvasElement,
  series: Series[],
  opts: { window: number; yLabel: string; yMin?: number; yMax?: number },
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#11151c";
  ctx.fillRect(0, 0, width, height);

  const all = series.flatMap((s) => s.points);
  if (all.length === 0) return;
  const tMax = Math.max(...all.map((p) => p.t));
  const tMin = tMax - opts.window;
  const visible = series.map((s) => ({
    ...s,
    points: s.points.filter((p) => p.t >= tMin),
  }));
  const values = visible.flatMap((s) => s.points.map((p) => p.value));
  if (values.length === 0) return;
  let yMin = opts.yMin ?? Math.min(...values);
  let yMax = opts.yMax ?? Math.max(...values);
  if (yMax - yMin < 1e-6) {
    yMax += 0.5;
    yMin -= 0.5;
  }
  const pad = 0.08 * (yMax - yMin);
  yMin -= pad;
  yMax += pad;

  const toX = (t: number) => ((t - tMin) / opts.window) * width;
  const toY = (v: number) => height - ((v - yMin) / (yMax - yMin)) * height;

  ctx.strokeStyle = "#2a3140";
  ctx.beginPath();
  const zeroY = toY(0);
  if (zeroY >= 0 && zeroY <= height) {
    ctx.moveTo(0, zeroY);
    ctx.lineTo(width, zeroY);
  }
  ctx.stroke();

  for (const s of visible) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.4;
    ctx.beginPath();
    s.points.forEach((p, i) => {
      const x = toX(p.t);
      const y = toY(p.value);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }

  ctx.fillStyle = "#8b93a7";
  ctx.font = "10px monospace";
  ctx.fillText(`${opts.yLabel}  [${yMin.toFixed(1)}, ${yMax.toFixed(1)}]`, 6, 12);
  series.forEach((s, i) => {
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, width - 90, 12 + 12 * i);
  });
}

export function drawScatter(
  canvas: HTMLCanvasElement,
  points: [number, number][],
  opts: { xLabel: string; yLabel: string; range: number },
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#11151c";
  ctx.fillRect(0, 0, width, height);

  const r = opts.range;
  const toX = (v: number) => ((v + r) / (2 * r)) * width;
  const toY = (v: number) => height - ((v + r) / (2 * r)) * height;

  ctx.strokeStyle = "#2a3140";
  ctx.beginPath();
  ctx.moveTo(toX(0), 0);
  ctx.lineTo(toX(0), height);
  ctx.moveTo(0, toY(0));
  ctx.lineTo(width, toY(0));
  ctx.stroke();

  points.forEach(([x, y], i) => {
    const age = i / Math.max(points.length - 1, 1);
    ctx.fillStyle = `rgba(126, 200, 227, ${0.15 + 0.85 * age})`;
    ctx.fillRect(toX(x) - 1.5, toY(y) - 1.5, 3, 3);
  });

  ctx.fillStyle = "#8b93a7";
  ctx.font = "10px monospace";
  ctx.fillText(`${opts.yLabel} vs ${opts.xLabel} (+/- ${r})`, 6, 12);
}
