/**
 * Minimal SVG chart builders: a multi-series line chart and an annotated
 * heatmap grid. Output is a plain SVG string with no timestamps or other
 * non-deterministic content, so identical inputs give identical bytes.
 */

export interface LineSeries {
  label: string;
  x: number[];
  y: number[];
  color: string;
  width?: number;
  dash?: string;
}

export interface LineChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  series: LineSeries[];
  width?: number;
  height?: number;
}

export interface HeatmapSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  xTicks: string[];
  yTicks: string[];
  /** values[row][col], row index aligned with yTicks. */
  values: number[][];
  annotate?: (v: number) => string;
  width?: number;
  height?: number;
}

export const PALETTE = [
  "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const MARGIN = { top: 44, right: 150, bottom: 52, left: 64 };

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmtTick(v: number): string {
  if (v === 0) return "0";
  const abs = Math.abs(v);
  if (abs >= 1000 || abs < 0.01) return v.toExponential(1);
  return Number(v.toPrecision(3)).toString();
}

function niceTicks(lo: number, hi: number, count = 5): number[] {
  if (lo === hi) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = span / count / step;
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * mult;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12 * span; v += s) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}

export function renderLineChart(spec: LineChartSpec): string {
  const W = spec.width ?? 860;
  const H = spec.height ?? 520;
  const plotW = W - MARGIN.left - MARGIN.right;
  const plotH = H - MARGIN.top - MARGIN.bottom;
  if (spec.series.length === 0) throw new Error("line chart needs at least one series");

  const xs = spec.series.flatMap((s) => s.x);
  const ys = spec.series.flatMap((s) => s.y);
  const xLo = Math.min(...xs), xHi = Math.max(...xs);
  let yLo = Math.min(...ys, 0), yHi = Math.max(...ys);
  if (yLo === yHi) yHi = yLo + 1;
  const px = (x: number) => MARGIN.left + (xHi === xLo ? 0.5 : (x - xLo) / (xHi - xLo)) * plotW;
  const py = (y: number) => MARGIN.top + (1 - (y - yLo) / (yHi - yLo)) * plotH;

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" font-family="sans-serif">`);
  parts.push(`<rect width="${W}" height="${H}" fill="white"/>`);
  parts.push(`<text x="${W / 2}" y="24" text-anchor="middle" font-size="17" font-weight="bold">${esc(spec.title)}</text>`);

  for (const t of niceTicks(yLo, yHi)) {
    const y = py(t);
    parts.push(`<line x1="${MARGIN.left}" y1="${y}" x2="${MARGIN.left + plotW}" y2="${y}" stroke="#ddd"/>`);
    parts.push(`<text x="${MARGIN.left - 8}" y="${y + 4}" text-anchor="end" font-size="12">${fmtTick(t)}</text>`);
  }
  for (const t of niceTicks(xLo, xHi)) {
    const x = px(t);
    parts.push(`<line x1="${x}" y1="${MARGIN.top}" x2="${x}" y2="${MARGIN.top + plotH}" stroke="#eee"/>`);
    parts.push(`<text x="${x}" y="${MARGIN.top + plotH + 18}" text-anchor="middle" font-size="12">${fmtTick(t)}</text>`);
  }
  parts.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#333"/>`);
  parts.push(`<text x="${MARGIN.left + plotW / 2}" y="${H - 14}" text-anchor="middle" font-size="14">${esc(spec.xLabel)}</text>`);
  parts.push(`<text x="18" y="${MARGIN.top + plotH / 2}" text-anchor="middle" font-size="14" transform="rotate(-90 18 ${MARGIN.top + plotH / 2})">${esc(spec.yLabel)}</text>`);

  spec.series.forEach((s, i) => {
    const pts = s.x.map((x, j) => `${px(x).toFixed(2)},${py(s.y[j]).toFixed(2)}`).join(" ");
    const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
    parts.push(`<polyline points="${pts}" fill="none" stroke="${s.color}" stroke-width="${s.width ?? 1.5}"${dash}/>`);
    const ly = MARGIN.top + 14 + i * 18;
    const lx = MARGIN.left + plotW + 12;
    parts.push(`<line x1="${lx}" y1="${ly - 4}" x2="${lx + 22}" y2="${ly - 4}" stroke="${s.color}" stroke-width="${s.width ?? 1.5}"${dash}/>`);
    parts.push(`<text x="${lx + 28}" y="${ly}" font-size="12">${esc(s.label)}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n");
}

/** Two-stop white-to-blue color ramp for heatmap cells. */
function rampColor(frac: number): string {
  const f = Math.max(0, Math.min(1, frac));
  const r = Math.round(255 - f * (255 - 31));
  const g = Math.round(255 - f * (255 - 119));
  const b = Math.round(255 - f * (255 - 180));
  return `rgb(${r},${g},${b})`;
}

export function renderHeatmap(spec: HeatmapSpec): string {
  const rows = spec.values.length;
  if (rows === 0 || spec.values[0].length === 0) throw new Error("heatmap needs at least one cell");
  const cols = spec.values[0].length;
  const W = spec.width ?? Math.max(420, 90 + cols * 56 + 40);
  const H = spec.height ?? Math.max(320, 90 + rows * 40 + 40);
  const left = 90, top = 56;
  const cellW = (W - left - 40) / cols;
  const cellH = (H - top - 60) / rows;
  const flat = spec.values.flat();
  const lo = Math.min(...flat), hi = Math.max(...flat);
  const annotate = spec.annotate ?? ((v: number) => fmtTick(v));

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" font-family="sans-serif">`);
  parts.push(`<rect width="${W}" height="${H}" fill="white"/>`);
  parts.push(`<text x="${W / 2}" y="26" text-anchor="middle" font-size="17" font-weight="bold">${esc(spec.title)}</text>`);

  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const v = spec.values[r][c];
      const frac = hi === lo ? 0.5 : (v - lo) / (hi - lo);
      const x = left + c * cellW, y = top + r * cellH;
      parts.push(`<rect x="${x}" y="${y}" width="${cellW}" height="${cellH}" fill="${rampColor(frac)}" stroke="#999"/>`);
      const textColor = frac > 0.6 ? "white" : "black";
      parts.push(`<text x="${x + cellW / 2}" y="${y + cellH / 2 + 4}" text-anchor="middle" font-size="12" fill="${textColor}">${esc(annotate(v))}</text>`);
    }
  }
  spec.xTicks.forEach((t, c) => {
    parts.push(`<text x="${left + (c + 0.5) * cellW}" y="${top + rows * cellH + 18}" text-anchor="middle" font-size="12">${esc(t)}</text>`);
  });
  spec.yTicks.forEach((t, r) => {
    parts.push(`<text x="${left - 8}" y="${top + (r + 0.5) * cellH + 4}" text-anchor="end" font-size="12">${esc(t)}</text>`);
  });
  parts.push(`<text x="${left + (cols * cellW) / 2}" y="${H - 14}" text-anchor="middle" font-size="14">${esc(spec.xLabel)}</text>`);
  parts.push(`<text x="20" y="${top + (rows * cellH) / 2}" text-anchor="middle" font-size="14" transform="rotate(-90 20 ${top + (rows * cellH) / 2})">${esc(spec.yLabel)}</text>`);
  parts.push("</svg>");
  return parts.join("\n");
}
