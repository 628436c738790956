#!/usr/bin/env node
/**
 * Usage: plot <kind> --in <csv> [--in <csv> ...] --out <png> [--layer <name>]
 *
 * Kinds: mae-curves | k-sweep | confusion-heatmap | attention-heatmap
 * Exits non-zero on any validation failure; writes nothing on error.
 */

import { writeFileSync } from "node:fs";
import { parseArgs } from "node:util";
import { Resvg } from "@resvg/resvg-js";
import { FIGURE_KINDS, FigureKind, render } from "./charts.js";
import { CsvFormatError } from "./csv.js";

export function svgToPng(svg: string): Buffer {
  return new Resvg(svg, { background: "white" }).render().asPng();
}

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        in: { type: "string", multiple: true },
        out: { type: "string" },
        layer: { type: "string" },
      },
    });
  } catch (err) {
    console.error((err as Error).message);
    return 2;
  }
  const [kind] = parsed.positionals;
  if (!kind || !(FIGURE_KINDS as string[]).includes(kind)) {
    console.error(`usage: plot <${FIGURE_KINDS.join("|")}> --in <csv...> --out <png>`);
    return 2;
  }
  const inputs = parsed.values.in ?? [];
  const out = parsed.values.out;
  if (!out) {
    console.error("--out <png> is required");
    return 2;
  }
  try {
    const svg = render({ kind: kind as FigureKind, inputs, layer: parsed.values.layer });
    writeFileSync(out, svgToPng(svg));
  } catch (err) {
    if (err instanceof CsvFormatError) {
      console.error(err.message);
      return 1;
    }
    throw err;
  }
  console.log(`wrote ${out}`);
  return 0;
}

if (process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!)) {
  process.exit(main(process.argv.slice(2)));
}
