/** Minimal CSV reader for the solver's numeric exports. */

import { readFileSync } from "node:fs";

export type Cell = number | string;

export interface Table {
  header: string[];
  rows: Cell[][];
}

export function readCsv(path: string): Table {
  const text = readFileSync(path, "utf8").trim();
  if (text.length === 0) return { header: [], rows: [] };
  const lines = text.split(/\r?\n/);
  const header = lines[0].split(",").map((s) => s.trim());
  const rows = lines.slice(1).map((line) =>
    line.split(",").map((chunk): Cell => {
      const t = chunk.trim();
      if (t === "") return "";
      const v = Number(t);
      return Number.isNaN(v) && t.toLowerCase() !== "nan" ? t : v;
    }),
  );
  return { header, rows };
}

export function column(table: Table, name: string): Cell[] {
  const i = table.header.indexOf(name);
  if (i < 0) throw new Error(`csv column ${name} not found in [${table.header.join(", ")}]`);
  return table.rows.map((r) => r[i]);
}

export function numericColumn(table: Table, name: string): number[] {
  return column(table, name).map((v) => (typeof v === "number" ? v : Number(v)));
}
