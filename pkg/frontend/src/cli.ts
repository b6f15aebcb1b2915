#!/usr/bin/env node
/**
 * Figure rendering CLI over the sweep aggregate CSV.
 *
 *   plot --in aggregate_results.csv --fig throughput --out fig.svg
 *
 * Exit codes: 0 success, 1 bad input data, 2 usage error.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";
import { parseAggregateCsv, SchemaError } from "./schema.js";
import { FIGURE_KINDS, FigureKind, renderFigure } from "./figures.js";

const USAGE =
  `usage: plot --in AGGREGATE_CSV --fig {${FIGURE_KINDS.join("|")}} --out PATH`;

export function run(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        in: { type: "string" },
        fig: { type: "string" },
        out: { type: "string" },
        help: { type: "boolean", short: "h" },
      },
      allowPositionals: true,
    });
  } catch (err) {
    process.stderr.write(`${(err as Error).message}\n${USAGE}\n`);
    return 2;
  }
  if (parsed.values.help) {
    process.stdout.write(`${USAGE}\n`);
    return 0;
  }
  // tolerate the subcommand-style spelling "plot --in ..."
  const positionals = parsed.positionals.filter(p => p !== "plot");
  const { in: inPath, fig, out } = parsed.values;
  if (positionals.length > 0 || !inPath || !fig || !out) {
    process.stderr.write(`${USAGE}\n`);
    return 2;
  }
  if (!(FIGURE_KINDS as readonly string[]).includes(fig)) {
    process.stderr.write(
      `unknown figure ${JSON.stringify(fig)}; choose one of ` +
      `${FIGURE_KINDS.join(", ")}\n`);
    return 2;
  }

  let text: string;
  try {
    text = readFileSync(inPath, "utf8");
  } catch (err) {
    process.stderr.write(`cannot read ${inPath}: ${(err as Error).message}\n`);
    return 1;
  }
  try {
    const rows = parseAggregateCsv(text);
    const svg = renderFigure(rows, fig as FigureKind);
    writeFileSync(out, svg, "utf8");
  } catch (err) {
    if (err instanceof SchemaError) {
      process.stderr.write(`${inPath}: ${err.message}\n`);
      return 1;
    }
    throw err;
  }
  process.stdout.write(`wrote ${out}\n`);
  return 0;
}

if (import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(run(process.argv.slice(2)));
}
