/** The six figure kinds rendered from a study manifest. */

import * as fs from "fs";
import * as path from "path";

import { Series, numeric, pairedSeries, parseCsv, Table } from "./csv";
import { extent, linScale, logScale, padLinear, padLog } from "./scale";
import {
  PALETTE,
  PanelSpec,
  SvgDoc,
  drawAxes,
  drawLegend,
  drawSeries,
  drawSlope2Reference,
} from "./svg";

export const FIGURE_KINDS = [
  "cost_vs_error",
  "energy_vs_time",
  "energy_vs_dt",
  "airy_snapshots",
  "soliton_errors",
  "order_plot",
] as const;

export type FigureKind = (typeof FIGURE_KINDS)[number];

export interface Study {
  dir: string;
  manifest: any;
}

export function loadStudy(manifestPath: string): Study {
  const text = fs.readFileSync(manifestPath, "utf8");
  const manifest = JSON.parse(text);
  if (manifest.schema !== 1 || manifest.kind !== "study") {
    throw new Error(`not a schema-1 study manifest: ${manifestPath}`);
  }
  return { dir: path.dirname(manifestPath), manifest };
}

function readTable(study: Study, relative: string): Table {
  return parseCsv(fs.readFileSync(path.join(study.dir, relative), "utf8"));
}

const SCHEME_LABELS: Record<string, string> = {
  fi_cons: "FI cons",
  li_cons: "LI cons",
  fi_midpoint: "FI",
  li_naive: "LI",
};

const RUN_LABELS: Record<string, string> = {
  "kdv-soliton-fi-cons": "FI cons",
  "kdv-soliton-li-cons": "LI cons",
  "kdv-soliton-fi": "FI",
  "kdv-soliton-li": "LI",
};

function panel(
  title: string,
  xLabel: string,
  yLabel: string,
  x: PanelSpec["x"],
  y: PanelSpec["y"],
  left = 70,
  top = 35,
  width = 480,
  height = 320,
): PanelSpec {
  return { title, xLabel, yLabel, x, y, left, top, width, height };
}

function legendEntries(series: Series[]): { label: string; color: string | null }[] {
  return series.map((s, i) => ({
    label: s.y.length === 0 ? `${s.label} (no data)` : s.label,
    color: s.y.length === 0 ? null : PALETTE[i % PALETTE.length],
  }));
}

function logLogFigure(
  title: string,
  xLabel: string,
  yLabel: string,
  series: Series[],
  withSlope2: boolean,
): string {
  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) => s.y);
  const x = logScale(padLog(extent(xs, true)), [70, 550]);
  const y = logScale(padLog(extent(ys, true)), [355, 35]);
  const spec = panel(title, xLabel, yLabel, x, y);
  const doc = new SvgDoc(620, 410);
  drawAxes(doc, spec);
  drawSeries(doc, spec, series, { markers: true });
  const entries: { label: string; color: string | null; dash?: string }[] =
    legendEntries(series);
  if (withSlope2) {
    const anchor = series.find((s) => s.x.length > 0);
    if (anchor) {
      const i = anchor.x.length - 1;
      drawSlope2Reference(doc, spec, anchor.x[i], anchor.y[i] * 0.6);
      entries.push({ label: "slope-2 reference", color: "#555", dash: "2,4" });
    }
  }
  drawLegend(doc, spec, entries);
  return doc.finish();
}

export function renderCostVsError(study: Study): string {
  const table = readTable(study, study.manifest.sweeps.convergence.csv);
  const series: Series[] = [];
  for (const scheme of Object.keys(SCHEME_LABELS)) {
    const rows = table.rows.filter((r) => r.scheme === scheme && r.status === "ok");
    series.push(pairedSeries(rows, "solve_count", "global_error", SCHEME_LABELS[scheme]));
  }
  return logLogFigure(
    "Global error vs number of linear solves",
    "cumulative linear solves",
    "global error",
    series,
    false,
  );
}

export function renderEnergyVsTime(study: Study): string {
  const run = study.manifest.runs["kdv-soliton-li-cons"];
  const table = readTable(study, run.steps_csv);
  const ts = numeric(table.rows, "t");
  const hs = numeric(table.rows, "H_d");
  const x: number[] = [];
  const y: number[] = [];
  let h0: number | null = null;
  for (let i = 0; i < table.rows.length; i++) {
    const t = ts[i];
    const h = hs[i];
    if (t === null || h === null) continue;
    if (h0 === null) h0 = h;
    const err = Math.abs(h - h0);
    if (err > 0) {
      x.push(t);
      y.push(err);
    }
  }
  const series: Series[] = [{ label: "|H(t) - H(0)|", x, y }];
  const xs = linScale(padLinear(extent(x)), [70, 550]);
  const ys = logScale(padLog(extent(y, true)), [355, 35]);
  const spec = panel(
    "Energy error along the linearly implicit run",
    "t",
    "|H(t) - H(0)|",
    xs,
    ys,
  );
  const doc = new SvgDoc(620, 410);
  drawAxes(doc, spec);
  drawSeries(doc, spec, series);
  drawLegend(doc, spec, legendEntries(series));
  return doc.finish();
}

export function renderEnergyVsDt(study: Study): string {
  const table = readTable(study, study.manifest.sweeps.energy.csv);
  const series = [pairedSeries(table.rows, "dt", "endpoint_error", "endpoint |dH|")];
  return logLogFigure(
    "Endpoint energy error vs time step",
    "dt",
    "|H(t_end) - H(0)|",
    series,
    true,
  );
}

export function renderAirySnapshots(study: Study): string {
  const doc = new SvgDoc(980, 410);
  const specs: [string, string][] = [
    ["airy-stable", "theta = 0.5"],
    ["airy-unstable", "theta = 0.49"],
  ];
  specs.forEach(([name, label], idx) => {
    const run = study.manifest.runs[name];
    const table = readTable(study, run.profile_csv);
    const s = pairedSeries(table.rows, "x", "u", label);
    const left = 70 + idx * 470;
    const x = linScale(extent(s.x), [left, left + 380]);
    const y = linScale(padLinear(extent(s.y)), [355, 35]);
    const spec = panel(
      `Final state, ${label}`,
      "x",
      "u",
      x,
      y,
      left,
      35,
      380,
      320,
    );
    drawAxes(doc, spec);
    drawSeries(doc, spec, [s]);
  });
  return doc.finish();
}

export function renderSolitonErrors(study: Study): string {
  const doc = new SvgDoc(980, 410);
  const panels: ["shape_err" | "distance_err", string][] = [
    ["shape_err", "shape error"],
    ["distance_err", "distance error"],
  ];
  panels.forEach(([column, label], idx) => {
    const series: Series[] = [];
    for (const name of Object.keys(RUN_LABELS)) {
      const run = study.manifest.runs[name];
      if (!run) {
        series.push({ label: RUN_LABELS[name], x: [], y: [] });
        continue;
      }
      const table = readTable(study, run.steps_csv);
      const s = pairedSeries(table.rows, "t", column, RUN_LABELS[name]);
      // keep strictly positive samples for the log axis
      const x: number[] = [];
      const y: number[] = [];
      for (let i = 0; i < s.x.length; i++) {
        if (s.y[i] > 0) {
          x.push(s.x[i]);
          y.push(s.y[i]);
        }
      }
      series.push({ label: s.label, x, y });
    }
    const left = 70 + idx * 470;
    const xs = linScale(
      padLinear(extent(series.flatMap((s) => s.x))),
      [left, left + 380],
    );
    const ys = logScale(padLog(extent(series.flatMap((s) => s.y), true)), [355, 35]);
    const spec = panel(label, "t", label, xs, ys, left, 35, 380, 320);
    drawAxes(doc, spec);
    drawSeries(doc, spec, series);
    drawLegend(doc, spec, legendEntries(series));
  });
  return doc.finish();
}

export function renderOrderPlot(study: Study): string {
  const table = readTable(study, study.manifest.sweeps.convergence.csv);
  const series: Series[] = [];
  for (const scheme of Object.keys(SCHEME_LABELS)) {
    const rows = table.rows.filter((r) => r.scheme === scheme && r.status === "ok");
    series.push(pairedSeries(rows, "dt", "global_error", SCHEME_LABELS[scheme]));
  }
  return logLogFigure(
    "Global error vs time step",
    "dt",
    "global error",
    series,
    true,
  );
}

export const RENDERERS: Record<FigureKind, (study: Study) => string> = {
  cost_vs_error: renderCostVsError,
  energy_vs_time: renderEnergyVsTime,
  energy_vs_dt: renderEnergyVsDt,
  airy_snapshots: renderAirySnapshots,
  soliton_errors: renderSolitonErrors,
  order_plot: renderOrderPlot,
};

export function renderAll(study: Study, outDir: string): Record<FigureKind, string> {
  fs.mkdirSync(outDir, { recursive: true });
  const written = {} as Record<FigureKind, string>;
  FIGURE_KINDS.forEach((kind, i) => {
    const svg = RENDERERS[kind](study);
    const file = path.join(outDir, `fig${i + 1}_${kind}.svg`);
    fs.writeFileSync(file, svg);
    written[kind] = file;
  });
  return written;
}
