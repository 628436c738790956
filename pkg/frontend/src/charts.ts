/**
 * The four figure kinds, each mapping parsed CSV rows to an SVG string.
 */

import {
  AttentionRow,
  ConfusionData,
  CsvFormatError,
  MetricsRow,
  readAttentionCsv,
  readConfusionCsv,
  readMetricsCsv,
} from "./csv.js";
import { LineSeries, PALETTE, renderHeatmap, renderLineChart } from "./svg.js";

export type FigureKind = "mae-curves" | "k-sweep" | "confusion-heatmap" | "attention-heatmap";

export const FIGURE_KINDS: FigureKind[] = [
  "mae-curves", "k-sweep", "confusion-heatmap", "attention-heatmap",
];

function groupBy<T, K>(items: T[], key: (t: T) => K): Map<K, T[]> {
  const out = new Map<K, T[]>();
  for (const item of items) {
    const k = key(item);
    const bucket = out.get(k);
    if (bucket) bucket.push(item);
    else out.set(k, [item]);
  }
  return out;
}

function sortedByRound(rows: MetricsRow[]): MetricsRow[] {
  return [...rows].sort((a, b) => a.round - b.round);
}

/** One line per fog over rounds; fogs that ever report drifted are highlighted. */
export function maeCurves(rows: MetricsRow[]): string {
  const byFog = groupBy(rows, (r) => r.fogId);
  const fogs = [...byFog.keys()].sort((a, b) => a - b);
  const strategy = rows[0].strategy;
  const series: LineSeries[] = fogs.map((fog, i) => {
    const fogRows = sortedByRound(byFog.get(fog)!);
    const drifted = fogRows.some((r) => r.drifted);
    return {
      label: `fog ${fog}${drifted ? " (drifted)" : ""}`,
      x: fogRows.map((r) => r.round),
      y: fogRows.map((r) => r.mae),
      color: drifted ? "#e83e8c" : PALETTE[i % PALETTE.length],
      width: drifted ? 3 : 1.2,
    };
  });
  return renderLineChart({
    title: `Per-fog MAE by round (${strategy})`,
    xLabel: "round",
    yLabel: "MAE",
    series,
  });
}

/** Mean MAE across fogs per round, one line per (K, strategy) input file. */
export function kSweep(fileRows: MetricsRow[][]): string {
  const series: LineSeries[] = [];
  const seen = new Set<string>();
  for (const rows of fileRows) {
    for (const [strategy, stratRows] of groupBy(rows, (r) => r.strategy)) {
      const k = new Set(stratRows.map((r) => r.fogId)).size;
      const label = `K=${k} ${strategy}`;
      if (seen.has(label)) {
        throw new CsvFormatError(`duplicate input for ${label}`);
      }
      seen.add(label);
      const byRound = groupBy(stratRows, (r) => r.round);
      const roundsSorted = [...byRound.keys()].sort((a, b) => a - b);
      series.push({
        label,
        x: roundsSorted,
        y: roundsSorted.map((r) => {
          const g = byRound.get(r)!;
          return g.reduce((s, row) => s + row.mae, 0) / g.length;
        }),
        color: PALETTE[series.length % PALETTE.length],
        dash: strategy === "fedavg" ? "5,4" : undefined,
      });
    }
  }
  return renderLineChart({
    title: "Mean MAE vs round by fog count",
    xLabel: "round",
    yLabel: "mean MAE across fogs",
    series,
  });
}

export function confusionHeatmap(data: ConfusionData): string {
  return renderHeatmap({
    title: `Confusion matrix (accuracy ${data.accuracy.toFixed(3)})`,
    xLabel: "predicted fog",
    yLabel: "true fog",
    xTicks: data.labels.map(String),
    yTicks: data.labels.map(String),
    values: data.counts,
    annotate: (v) => String(v),
  });
}

/** α per fog (rows) per round (columns) for one layer. */
export function attentionHeatmap(rows: AttentionRow[], layer?: string): string {
  const layers = [...new Set(rows.map((r) => r.layer))];
  const chosen = layer ?? layers[0];
  const layerRows = rows.filter((r) => r.layer === chosen);
  if (layerRows.length === 0) {
    throw new CsvFormatError(
      `layer "${chosen}" not present; available layers: ${layers.join(", ")}`,
    );
  }
  const fogs = [...new Set(layerRows.map((r) => r.fogId))].sort((a, b) => a - b);
  const rounds = [...new Set(layerRows.map((r) => r.round))].sort((a, b) => a - b);
  const cell = new Map(layerRows.map((r) => [`${r.fogId}:${r.round}`, r.alpha]));
  const values = fogs.map((f) => rounds.map((r) => cell.get(`${f}:${r}`) ?? 0));
  return renderHeatmap({
    title: `Attention weights by round — layer ${chosen}`,
    xLabel: "round",
    yLabel: "fog",
    xTicks: rounds.map(String),
    yTicks: fogs.map(String),
    values,
    annotate: (v) => v.toFixed(2),
  });
}

export interface PlotJob {
  kind: FigureKind;
  inputs: string[];
  /** attention-heatmap only: layer to display (defaults to the first). */
  layer?: string;
}

/** Validates inputs for `job` and returns the rendered SVG string. */
export function render(job: PlotJob): string {
  if (job.inputs.length === 0) {
    throw new CsvFormatError("at least one --in CSV is required");
  }
  switch (job.kind) {
    case "mae-curves": {
      if (job.inputs.length !== 1) {
        throw new CsvFormatError("mae-curves takes exactly one metrics CSV");
      }
      return maeCurves(readMetricsCsv(job.inputs[0]));
    }
    case "k-sweep":
      return kSweep(job.inputs.map(readMetricsCsv));
    case "confusion-heatmap": {
      if (job.inputs.length !== 1) {
        throw new CsvFormatError("confusion-heatmap takes exactly one confusion CSV");
      }
      return confusionHeatmap(readConfusionCsv(job.inputs[0]));
    }
    case "attention-heatmap": {
      if (job.inputs.length !== 1) {
        throw new CsvFormatError("attention-heatmap takes exactly one attention CSV");
      }
      return attentionHeatmap(readAttentionCsv(job.inputs[0]), job.layer);
    }
  }
}
