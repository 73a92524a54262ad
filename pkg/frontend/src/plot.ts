/**
 * SVG figures from metrics CSVs.
 *
 * Runs are grouped by name: the group key is the CSV's stem (its parent
 * directory when the file is called metrics.csv) with any seed suffix like
 * "_seed3" removed. Groups with several members are drawn as a mean line
 * with a min-max band. A second figure, final accuracy vs label count, is
 * produced when at least two group names carry a label count (a "labels600"
 * token or a trailing "_600").
 */

import * as path from "node:path";

import { MetricsRow, parseMetricsCsv } from "./metrics.js";

export interface RunInput {
  path: string;
  text: string;
}

interface Group {
  name: string;
  curves: { x: number; y: number }[][]; // one per member run
}

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

export function groupKey(csvPath: string): string {
  let stem = path.basename(csvPath).replace(/\.csv$/i, "");
  if (stem === "metrics") {
    const parent = path.basename(path.dirname(csvPath));
    if (parent.length > 0 && parent !== ".") stem = parent;
  }
  return stem.replace(/[_-]?seed\d+/i, "") || stem;
}

export function labelCountFromName(name: string): number | null {
  const tagged = name.match(/labels?[_-]?(\d+)/i);
  if (tagged) return parseInt(tagged[1], 10);
  const trailing = name.match(/[_-](\d+)$/);
  if (trailing) return parseInt(trailing[1], 10);
  return null;
}

function accuracyCurve(rows: MetricsRow[]): { x: number; y: number }[] {
  const pts: { x: number; y: number }[] = [];
  rows.forEach((row, i) => {
    if (Number.isFinite(row.test_acc)) pts.push({ x: i + 1, y: row.test_acc });
  });
  return pts;
}

function buildGroups(inputs: RunInput[]): Group[] {
  const groups = new Map<string, Group>();
  for (const input of inputs) {
    const rows = parseMetricsCsv(input.text, input.path);
    const key = groupKey(input.path);
    if (!groups.has(key)) groups.set(key, { name: key, curves: [] });
    groups.get(key)!.curves.push(accuracyCurve(rows));
  }
  return [...groups.values()];
}

// --- tiny scale/SVG helpers -------------------------------------------------

const W = 720;
const H = 440;
const M = { top: 44, right: 24, bottom: 52, left: 64 };

function ticks(lo: number, hi: number, count: number): number[] {
  if (!(hi > lo)) return [lo];
  const step = Math.pow(10, Math.floor(Math.log10((hi - lo) / count)));
  const err = (hi - lo) / (count * step);
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = mult * step;
  const out: number[] = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12; v += s) {
    out.push(Number(v.toPrecision(12)));
  }
  return out;
}

function fmt(v: number): string {
  return Math.abs(v) >= 1000 ? String(v) : String(Number(v.toPrecision(4)));
}

class Frame {
  constructor(
    public x0: number, public x1: number,
    public y0: number, public y1: number,
    public logX = false,
  ) {
    if (this.logX) {
      this.x0 = Math.log10(x0);
      this.x1 = Math.log10(x1);
    }
  }

  px(x: number): number {
    const v = this.logX ? Math.log10(x) : x;
    const t = this.x1 === this.x0 ? 0.5 : (v - this.x0) / (this.x1 - this.x0);
    return M.left + t * (W - M.left - M.right);
  }

  py(y: number): number {
    const t = this.y1 === this.y0 ? 0.5 : (y - this.y0) / (this.y1 - this.y0);
    return H - M.bottom - t * (H - M.top - M.bottom);
  }
}

function axes(f: Frame, xLabel: string, yLabel: string, title: string,
              xTicks: number[], yTicks: number[]): string {
  const parts: string[] = [];
  const bottom = H - M.bottom;
  parts.push(`<g font-family="sans-serif" font-size="12" fill="#333">`);
  parts.push(`<text x="${W / 2}" y="24" text-anchor="middle" font-size="15">${title}</text>`);
  for (const t of yTicks) {
    const y = f.py(t);
    parts.push(`<line x1="${M.left}" y1="${y}" x2="${W - M.right}" y2="${y}" stroke="#ddd"/>`);
    parts.push(`<text x="${M.left - 8}" y="${y + 4}" text-anchor="end">${fmt(t)}</text>`);
  }
  for (const t of xTicks) {
    const x = f.px(t);
    parts.push(`<line x1="${x}" y1="${M.top}" x2="${x}" y2="${bottom}" stroke="#eee"/>`);
    parts.push(`<text x="${x}" y="${bottom + 18}" text-anchor="middle">${fmt(t)}</text>`);
  }
  parts.push(`<line x1="${M.left}" y1="${bottom}" x2="${W - M.right}" y2="${bottom}" stroke="#333"/>`);
  parts.push(`<line x1="${M.left}" y1="${M.top}" x2="${M.left}" y2="${bottom}" stroke="#333"/>`);
  parts.push(`<text x="${W / 2}" y="${H - 12}" text-anchor="middle">${xLabel}</text>`);
  parts.push(`<text transform="rotate(-90 16 ${H / 2})" x="16" y="${H / 2}" text-anchor="middle">${yLabel}</text>`);
  parts.push(`</g>`);
  return parts.join("\n");
}

function polyline(pts: { x: number; y: number }[], f: Frame, color: string): string {
  const d = pts.map((p) => `${f.px(p.x).toFixed(2)},${f.py(p.y).toFixed(2)}`).join(" ");
  return `<polyline fill="none" stroke="${color}" stroke-width="2" points="${d}"/>`;
}

function band(xs: number[], lo: number[], hi: number[], f: Frame, color: string): string {
  const up = xs.map((x, i) => `${f.px(x).toFixed(2)},${f.py(hi[i]).toFixed(2)}`);
  const dn = xs.map((x, i) => `${f.px(x).toFixed(2)},${f.py(lo[i]).toFixed(2)}`).reverse();
  return `<polygon fill="${color}" fill-opacity="0.15" stroke="none" points="${up.concat(dn).join(" ")}"/>`;
}

function legend(names: string[]): string {
  const parts = [`<g font-family="sans-serif" font-size="12">`];
  names.forEach((name, i) => {
    const y = M.top + 8 + 16 * i;
    const color = PALETTE[i % PALETTE.length];
    parts.push(`<rect x="${M.left + 10}" y="${y - 9}" width="12" height="12" fill="${color}"/>`);
    parts.push(`<text x="${M.left + 27}" y="${y + 1}" fill="#333">${name}</text>`);
  });
  parts.push(`</g>`);
  return parts.join("\n");
}

function svgDoc(body: string): string {
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">\n`
    + `<rect width="${W}" height="${H}" fill="white"/>\n${body}\n</svg>\n`;
}

// --- figures -----------------------------------------------------------------

/** Mean with min/max envelope across member curves, aligned by x. */
function envelope(curves: { x: number; y: number }[][]) {
  const byX = new Map<number, number[]>();
  for (const curve of curves) {
    for (const p of curve) {
      if (!byX.has(p.x)) byX.set(p.x, []);
      byX.get(p.x)!.push(p.y);
    }
  }
  const xs = [...byX.keys()].sort((a, b) => a - b);
  const mean = xs.map((x) => byX.get(x)!.reduce((a, b) => a + b, 0) / byX.get(x)!.length);
  const lo = xs.map((x) => Math.min(...byX.get(x)!));
  const hi = xs.map((x) => Math.max(...byX.get(x)!));
  return { xs, mean, lo, hi };
}

export function renderAccuracyVsEpoch(groups: Group[]): string {
  const drawn = groups.filter((g) => g.curves.some((c) => c.length > 0));
  if (drawn.length === 0) {
    throw new Error("no finite test accuracy values to plot");
  }
  let xMax = 1;
  let yLo = Infinity;
  let yHi = -Infinity;
  for (const g of drawn) {
    for (const c of g.curves) {
      for (const p of c) {
        xMax = Math.max(xMax, p.x);
        yLo = Math.min(yLo, p.y);
        yHi = Math.max(yHi, p.y);
      }
    }
  }
  if (yLo === yHi) { yLo -= 0.01; yHi += 0.01; }
  const pad = 0.05 * (yHi - yLo);
  const f = new Frame(1, xMax, Math.max(0, yLo - pad), Math.min(1, yHi + pad));
  const parts: string[] = [];
  parts.push(axes(f, "evaluation point", "test accuracy", "Test accuracy over training",
                  ticks(1, xMax, 8), ticks(f.y0, f.y1, 6)));
  drawn.forEach((g, i) => {
    const color = PALETTE[i % PALETTE.length];
    const env = envelope(g.curves);
    if (g.curves.length > 1) {
      parts.push(band(env.xs, env.lo, env.hi, f, color));
    }
    parts.push(polyline(env.xs.map((x, j) => ({ x, y: env.mean[j] })), f, color));
  });
  parts.push(legend(drawn.map((g) => g.name)));
  return svgDoc(parts.join("\n"));
}

export function renderAccuracyVsLabels(groups: Group[]): string | null {
  const pts: { labels: number; lo: number; hi: number; mean: number }[] = [];
  for (const g of groups) {
    const count = labelCountFromName(g.name);
    if (count === null) continue;
    const finals = g.curves
      .map((c) => (c.length > 0 ? c[c.length - 1].y : NaN))
      .filter((v) => Number.isFinite(v));
    if (finals.length === 0) continue;
    pts.push({
      labels: count,
      mean: finals.reduce((a, b) => a + b, 0) / finals.length,
      lo: Math.min(...finals),
      hi: Math.max(...finals),
    });
  }
  if (pts.length < 2) return null;
  pts.sort((a, b) => a.labels - b.labels);
  const yLo = Math.min(...pts.map((p) => p.lo));
  const yHi = Math.max(...pts.map((p) => p.hi));
  const pad = Math.max(0.05 * (yHi - yLo), 0.005);
  const f = new Frame(pts[0].labels, pts[pts.length - 1].labels,
                      Math.max(0, yLo - pad), Math.min(1, yHi + pad), true);
  const xTicks = pts.map((p) => p.labels);
  const parts: string[] = [];
  parts.push(axes(f, "labeled examples", "final test accuracy",
                  "Final accuracy vs label budget", xTicks, ticks(f.y0, f.y1, 6)));
  const color = PALETTE[0];
  parts.push(band(pts.map((p) => p.labels), pts.map((p) => p.lo),
                  pts.map((p) => p.hi), f, color));
  parts.push(polyline(pts.map((p) => ({ x: p.labels, y: p.mean })), f, color));
  for (const p of pts) {
    parts.push(`<circle cx="${f.px(p.labels).toFixed(2)}" cy="${f.py(p.mean).toFixed(2)}" r="3.5" fill="${color}"/>`);
  }
  return svgDoc(parts.join("\n"));
}

/** Render every figure; returns file name -> SVG text. */
export function plotMetrics(inputs: RunInput[]): Map<string, string> {
  const groups = buildGroups(inputs);
  const out = new Map<string, string>();
  out.set("accuracy_vs_epoch.svg", renderAccuracyVsEpoch(groups));
  const labels = renderAccuracyVsLabels(groups);
  if (labels !== null) out.set("accuracy_vs_labels.svg", labels);
  return out;
}
