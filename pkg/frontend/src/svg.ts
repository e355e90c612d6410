/** Deterministic SVG assembly: no timestamps, no randomness, fixed precision. */

import { Scale, coord, fmt } from "./scale";
import { Series } from "./csv";

export const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

export interface PanelSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  x: Scale;
  y: Scale;
  left: number;
  top: number;
  width: number;
  height: number;
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export class SvgDoc {
  private parts: string[] = [];

  constructor(readonly width: number, readonly height: number) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
        `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
    );
    this.parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  }

  raw(fragment: string): void {
    this.parts.push(fragment);
  }

  text(
    x: number,
    y: number,
    content: string,
    opts: { size?: number; anchor?: string; rotate?: number; cls?: string } = {},
  ): void {
    const size = opts.size ?? 11;
    const anchor = opts.anchor ?? "start";
    const rotate = opts.rotate
      ? ` transform="rotate(${opts.rotate} ${coord(x)} ${coord(y)})"`
      : "";
    const cls = opts.cls ? ` class="${opts.cls}"` : "";
    this.parts.push(
      `<text x="${coord(x)}" y="${coord(y)}" font-size="${size}" ` +
        `text-anchor="${anchor}"${rotate}${cls}>${escapeXml(content)}</text>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, opts: { width?: number; dash?: string; cls?: string } = {}): void {
    const dash = opts.dash ? ` stroke-dasharray="${opts.dash}"` : "";
    const cls = opts.cls ? ` class="${opts.cls}"` : "";
    this.parts.push(
      `<line x1="${coord(x1)}" y1="${coord(y1)}" x2="${coord(x2)}" y2="${coord(y2)}" ` +
        `stroke="${stroke}" stroke-width="${opts.width ?? 1}"${dash}${cls}/>`,
    );
  }

  polyline(points: [number, number][], stroke: string, opts: { width?: number; dash?: string; cls?: string } = {}): void {
    const body = points.map(([x, y]) => `${coord(x)},${coord(y)}`).join(" ");
    const dash = opts.dash ? ` stroke-dasharray="${opts.dash}"` : "";
    const cls = opts.cls ? ` class="${opts.cls}"` : "";
    this.parts.push(
      `<polyline points="${body}" fill="none" stroke="${stroke}" ` +
        `stroke-width="${opts.width ?? 1.5}"${dash}${cls}/>`,
    );
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.parts.push(`<circle cx="${coord(x)}" cy="${coord(y)}" r="${r}" fill="${fill}"/>`);
  }

  finish(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}

export function drawAxes(doc: SvgDoc, panel: PanelSpec): void {
  const { x, y, left, top, width, height } = panel;
  const bottom = top + height;
  const right = left + width;
  doc.line(left, bottom, right, bottom, "#222");
  doc.line(left, top, left, bottom, "#222");
  for (const tick of x.ticks()) {
    const px = x.map(tick);
    if (px < left - 0.5 || px > right + 0.5) continue;
    doc.line(px, bottom, px, bottom + 4, "#222");
    doc.text(px, bottom + 16, fmt(tick), { anchor: "middle", size: 10 });
  }
  for (const tick of y.ticks()) {
    const py = y.map(tick);
    if (py < top - 0.5 || py > bottom + 0.5) continue;
    doc.line(left - 4, py, left, py, "#222");
    doc.text(left - 7, py + 3, fmt(tick), { anchor: "end", size: 10 });
    doc.line(left, py, right, py, "#eee");
  }
  doc.text(left + width / 2, bottom + 32, panel.xLabel, { anchor: "middle" });
  doc.text(left - 44, top + height / 2, panel.yLabel, {
    anchor: "middle",
    rotate: -90,
  });
  doc.text(left + width / 2, top - 8, panel.title, { anchor: "middle", size: 13 });
}

export function drawSeries(
  doc: SvgDoc,
  panel: PanelSpec,
  series: Series[],
  opts: { markers?: boolean } = {},
): void {
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const pts: [number, number][] = [];
    for (let j = 0; j < s.x.length; j++) {
      if (panel.y.kind === "log" && s.y[j] <= 0) continue;
      pts.push([panel.x.map(s.x[j]), panel.y.map(s.y[j])]);
    }
    if (pts.length > 1) {
      doc.polyline(pts, color, { cls: `series-${i}` });
    }
    if (opts.markers || pts.length === 1) {
      for (const [px, py] of pts) {
        doc.circle(px, py, 2.5, color);
      }
    }
  });
}

export function drawLegend(
  doc: SvgDoc,
  panel: PanelSpec,
  entries: { label: string; color: string | null; dash?: string }[],
): void {
  const x0 = panel.left + panel.width - 150;
  let y0 = panel.top + 14;
  for (const entry of entries) {
    if (entry.color !== null) {
      doc.line(x0, y0 - 4, x0 + 22, y0 - 4, entry.color, {
        width: 2,
        dash: entry.dash,
      });
    }
    doc.text(x0 + 28, y0, entry.label, { size: 10 });
    y0 += 15;
  }
}

/** Dotted slope-2 reference through an anchor point, for log-log panels. */
export function drawSlope2Reference(doc: SvgDoc, panel: PanelSpec, anchorX: number, anchorY: number): void {
  const [lo, hi] = panel.x.domain;
  const points: [number, number][] = [];
  for (const xv of [lo, hi]) {
    const yv = anchorY * Math.pow(xv / anchorX, 2);
    points.push([panel.x.map(xv), panel.y.map(yv)]);
  }
  doc.polyline(points, "#555", { dash: "2,4", width: 1.2, cls: "reference-slope2" });
}
