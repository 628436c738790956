/**
 * CSV readers for the simulator's output files.
 *
 * Each reader validates the header before touching any rows and reports
 * missing or unexpected columns by name.
 */

import { readFileSync } from "node:fs";

export class CsvFormatError extends Error {}

export interface MetricsRow {
  round: number;
  fogId: number;
  strategy: string;
  mae: number;
  drifted: boolean;
}

export interface AttentionRow {
  round: number;
  layer: string;
  fogId: number;
  alpha: number;
}

export interface ConfusionData {
  labels: number[];
  /** counts[true][predicted], indexed by position in `labels`. */
  counts: number[][];
  accuracy: number;
}

const METRICS_HEADER = ["round", "fog_id", "strategy", "mae", "drifted"];
const ATTENTION_HEADER = ["round", "layer", "fog_id", "alpha"];
const CONFUSION_HEADER = ["true", "predicted", "count"];

function readLines(path: string): string[] {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new CsvFormatError(`cannot read ${path}: ${(err as Error).message}`);
  }
  const lines = text.split(/\r?\n/).filter((l) => l.trim() !== "");
  if (lines.length === 0) {
    throw new CsvFormatError(`${path} is empty`);
  }
  return lines;
}

function checkHeader(path: string, actual: string[], expected: string[]): void {
  const missing = expected.filter((c) => !actual.includes(c));
  const extra = actual.filter((c) => !expected.includes(c));
  if (missing.length > 0 || extra.length > 0) {
    const parts: string[] = [];
    if (missing.length > 0) parts.push(`missing column(s): ${missing.join(", ")}`);
    if (extra.length > 0) parts.push(`unexpected column(s): ${extra.join(", ")}`);
    throw new CsvFormatError(
      `${path}: header mismatch — ${parts.join("; ")} ` +
        `(expected "${expected.join(",")}")`,
    );
  }
}

function parseNumber(path: string, lineNo: number, field: string, raw: string): number {
  const value = Number(raw);
  if (raw.trim() === "" || !Number.isFinite(value)) {
    throw new CsvFormatError(`${path}:${lineNo}: column "${field}" is not a finite number: "${raw}"`);
  }
  return value;
}

export function readMetricsCsv(path: string): MetricsRow[] {
  const lines = readLines(path);
  const header = lines[0].split(",");
  checkHeader(path, header, METRICS_HEADER);
  const col = (name: string) => header.indexOf(name);
  const rows: MetricsRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== header.length) {
      throw new CsvFormatError(`${path}:${i + 1}: expected ${header.length} cells, got ${cells.length}`);
    }
    rows.push({
      round: parseNumber(path, i + 1, "round", cells[col("round")]),
      fogId: parseNumber(path, i + 1, "fog_id", cells[col("fog_id")]),
      strategy: cells[col("strategy")],
      mae: parseNumber(path, i + 1, "mae", cells[col("mae")]),
      drifted: cells[col("drifted")] === "1" || cells[col("drifted")] === "True",
    });
  }
  if (rows.length === 0) {
    throw new CsvFormatError(`${path} has a header but no data rows`);
  }
  return rows;
}

export function readAttentionCsv(path: string): AttentionRow[] {
  const lines = readLines(path);
  const header = lines[0].split(",");
  checkHeader(path, header, ATTENTION_HEADER);
  const col = (name: string) => header.indexOf(name);
  const rows: AttentionRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== header.length) {
      throw new CsvFormatError(`${path}:${i + 1}: expected ${header.length} cells, got ${cells.length}`);
    }
    rows.push({
      round: parseNumber(path, i + 1, "round", cells[col("round")]),
      layer: cells[col("layer")],
      fogId: parseNumber(path, i + 1, "fog_id", cells[col("fog_id")]),
      alpha: parseNumber(path, i + 1, "alpha", cells[col("alpha")]),
    });
  }
  if (rows.length === 0) {
    throw new CsvFormatError(`${path} has a header but no data rows`);
  }
  return rows;
}

/**
 * Reads a confusion-matrix CSV: `true,predicted,count` cell rows followed by
 * a trailing `accuracy,,<value>` summary line.
 */
export function readConfusionCsv(path: string): ConfusionData {
  const lines = readLines(path);
  const header = lines[0].split(",");
  checkHeader(path, header, CONFUSION_HEADER);
  const cellRows: Array<[number, number, number]> = [];
  let accuracy: number | null = null;
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells[0] === "accuracy") {
      accuracy = parseNumber(path, i + 1, "count", cells[2] ?? "");
      continue;
    }
    if (cells.length !== 3) {
      throw new CsvFormatError(`${path}:${i + 1}: expected 3 cells, got ${cells.length}`);
    }
    cellRows.push([
      parseNumber(path, i + 1, "true", cells[0]),
      parseNumber(path, i + 1, "predicted", cells[1]),
      parseNumber(path, i + 1, "count", cells[2]),
    ]);
  }
  if (cellRows.length === 0) {
    throw new CsvFormatError(`${path} has no confusion cells`);
  }
  if (accuracy === null) {
    throw new CsvFormatError(`${path} is missing the trailing accuracy line`);
  }
  const labels = [...new Set(cellRows.flatMap(([t, p]) => [t, p]))].sort((a, b) => a - b);
  const index = new Map(labels.map((l, i) => [l, i]));
  const counts = labels.map(() => labels.map(() => 0));
  for (const [t, p, c] of cellRows) {
    counts[index.get(t)!][index.get(p)!] = c;
  }
  return { labels, counts, accuracy };
}
