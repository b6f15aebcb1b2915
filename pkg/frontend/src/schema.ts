/**
 * Strict reader for aggregate_results.csv.
 *
 * The header is a fixed contract with the sweep pipeline; anything that
 * deviates (missing column, reordered column, short row, non-number) is a
 * SchemaError whose message spells out the expected header so the caller
 * can see at a glance what the file should look like.
 */

import Papa from "papaparse";

export const AGGREGATE_COLUMNS = [
  "policy",
  "users",
  "capacity",
  "reps",
  "throughput_bps_mean",
  "throughput_bps_std",
  "blocking_prob_mean",
  "blocking_prob_std",
  "handovers_per_user_mean",
  "handovers_per_user_std",
  "episode_reward_mean",
  "episode_reward_std",
  "objective_mean",
] as const;

export const EXPECTED_HEADER = AGGREGATE_COLUMNS.join(",");

export interface AggregateRow {
  policy: string;
  users: number;
  capacity: number;
  reps: number;
  throughput_bps_mean: number;
  throughput_bps_std: number;
  blocking_prob_mean: number;
  blocking_prob_std: number;
  handovers_per_user_mean: number;
  handovers_per_user_std: number;
  episode_reward_mean: number;
  episode_reward_std: number;
  objective_mean: number;
}

export class SchemaError extends Error {}

function badFile(detail: string): SchemaError {
  return new SchemaError(`${detail}; expected header: ${EXPECTED_HEADER}`);
}

export function parseAggregateCsv(text: string): AggregateRow[] {
  const parsed = Papa.parse<string[]>(text.trim(), {
    delimiter: ",",
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw badFile(`CSV parse failed: ${parsed.errors[0].message}`);
  }
  const grid = parsed.data;
  if (grid.length === 0) {
    throw badFile("file is empty");
  }
  const header = grid[0].join(",");
  if (header !== EXPECTED_HEADER) {
    throw badFile(`unexpected header: ${header}`);
  }

  const rows: AggregateRow[] = [];
  for (let i = 1; i < grid.length; i++) {
    const cells = grid[i];
    if (cells.length !== AGGREGATE_COLUMNS.length) {
      throw badFile(`row ${i + 1} has ${cells.length} cells, ` +
        `expected ${AGGREGATE_COLUMNS.length}`);
    }
    const row: Record<string, number | string> = { policy: cells[0] };
    for (let c = 1; c < AGGREGATE_COLUMNS.length; c++) {
      const value = Number(cells[c]);
      if (!Number.isFinite(value)) {
        throw badFile(
          `row ${i + 1}: non-numeric value "${cells[c]}" in column ` +
          `${AGGREGATE_COLUMNS[c]}`);
      }
      row[AGGREGATE_COLUMNS[c]] = value;
    }
    rows.push(row as unknown as AggregateRow);
  }
  return rows;
}
