/** Run-directory loader: manifest plus lazily parsed CSV field frames. */

import { existsSync, readFileSync } from "node:fs";
import { basename, dirname, isAbsolute, join } from "node:path";

import { readCsv } from "./csv.js";

export class MissingDataError extends Error {}

export interface TrajectoryEntry {
  bin: string;
  times: number[];
  csv_frames?: string[];
  meta: { t_start: number; T: number; dt: number; stride: number; frame_count: number };
}

export interface Manifest {
  schema_version: number;
  mode: string;
  config: Record<string, Record<string, unknown>>;
  cost: Record<string, number> | null;
  loss_history?: number[];
  mu_history?: number[];
  diagnostics: Record<string, unknown>;
  outputs?: Record<string, TrajectoryEntry | { bin: string }>;
}

/** One field frame parsed back from its CSV export. */
export interface Frame {
  dim: 1 | 2;
  /** axis coordinates: [x] in 1D, [x, y] in 2D */
  axes: number[][];
  /** 1D: values[0] is the profile; 2D: values is the row-major grid */
  values: number[][];
  spacing: number;
}

export class RunArtifact {
  readonly dir: string;
  readonly manifest: Manifest;

  private constructor(dir: string, manifest: Manifest) {
    this.dir = dir;
    this.manifest = manifest;
  }

  static load(dir: string): RunArtifact {
    const path = join(dir, "manifest.json");
    if (!existsSync(path)) throw new MissingDataError(`no manifest.json in ${dir}`);
    const manifest = JSON.parse(readFileSync(path, "utf8")) as Manifest;
    if (manifest.schema_version !== 1)
      throw new MissingDataError(`unsupported manifest schema ${manifest.schema_version} in ${dir}`);
    return new RunArtifact(dir, manifest);
  }

  get kind(): string {
    return this.manifest.mode;
  }

  trajectory(name: string): TrajectoryEntry {
    const outputs = this.manifest.outputs ?? {};
    const entry = outputs[name];
    if (!entry || !("times" in entry))
      throw new MissingDataError(
        `run ${this.dir} has no trajectory ${name} (available: ${Object.keys(outputs).join(", ")})`,
      );
    return entry;
  }

  /** First trajectory among the candidates present in the outputs. */
  anyTrajectory(...names: string[]): { name: string; entry: TrajectoryEntry } {
    for (const name of names) {
      const entry = (this.manifest.outputs ?? {})[name];
      if (entry && "times" in entry) return { name, entry: entry as TrajectoryEntry };
    }
    throw new MissingDataError(`run ${this.dir} has none of [${names.join(", ")}]`);
  }

  frame(entry: TrajectoryEntry, index: number): Frame {
    const frames = entry.csv_frames;
    if (!frames || frames.length === 0)
      throw new MissingDataError(`trajectory in ${this.dir} has no CSV frames (set output.csv)`);
    const i = index < 0 ? frames.length + index : index;
    if (i < 0 || i >= frames.length)
      throw new MissingDataError(`frame ${index} out of range (${frames.length} frames)`);
    return parseFrameCsv(join(this.dir, frames[i]));
  }

  csvTable(relPath: string) {
    const path = join(this.dir, relPath);
    if (!existsSync(path)) throw new MissingDataError(`missing ${relPath} in ${this.dir}`);
    return readCsv(path);
  }

  diagnostic(name: string): number {
    const v = this.manifest.diagnostics[name];
    if (typeof v !== "number")
      throw new MissingDataError(`manifest of ${this.dir} records no numeric diagnostic ${name}`);
    return v;
  }

  /** Resolve the recorded reference run directory (best-effort relative handling). */
  referenceDir(): string {
    const ref = this.manifest.diagnostics["reference"];
    if (typeof ref !== "string")
      throw new MissingDataError(`manifest of ${this.dir} records no reference run`);
    const candidates = isAbsolute(ref)
      ? [ref]
      : [ref, join(dirname(this.dir), basename(ref))];
    for (const c of candidates) if (existsSync(join(c, "manifest.json"))) return c;
    throw new MissingDataError(`reference run ${ref} not found near ${this.dir}`);
  }
}

export function parseFrameCsv(path: string): Frame {
  if (!existsSync(path)) throw new MissingDataError(`missing frame file ${path}`);
  const table = readCsv(path);
  const cols = table.header;
  if (cols.length === 2 && cols[0] === "x") {
    const x = table.rows.map((r) => r[0] as number);
    const v = table.rows.map((r) => r[1] as number);
    return { dim: 1, axes: [x], values: [v], spacing: x[1] - x[0] };
  }
  if (cols.length === 3 && cols[0] === "x" && cols[1] === "y") {
    const n = table.rows.length;
    const J = Math.round(Math.sqrt(n));
    if (J * J !== n) throw new MissingDataError(`${path}: ${n} rows is not a square grid`);
    const values: number[][] = [];
    const x: number[] = [];
    const y: number[] = [];
    for (let j = 0; j < J; j++) y.push(table.rows[j][1] as number);
    for (let i = 0; i < J; i++) {
      x.push(table.rows[i * J][0] as number);
      values.push(table.rows.slice(i * J, (i + 1) * J).map((r) => r[2] as number));
    }
    return { dim: 2, axes: [x, y], values, spacing: x[1] - x[0] };
  }
  throw new MissingDataError(`${path}: unrecognized field CSV header [${cols.join(", ")}]`);
}

/** Exact grid quadrature of |a - b| (h^d weights), matching the solver's. */
export function l1Distance(a: Frame, b: Frame): number {
  if (a.dim !== b.dim || a.values.length !== b.values.length)
    throw new MissingDataError("frames are not on the same grid");
  let acc = 0;
  for (let i = 0; i < a.values.length; i++)
    for (let j = 0; j < a.values[i].length; j++) acc += Math.abs(a.values[i][j] - b.values[i][j]);
  const h = a.spacing;
  return acc * (a.dim === 1 ? h : h * h);
}

export function mass(frame: Frame): number {
  let acc = 0;
  for (const row of frame.values) for (const v of row) acc += v;
  const h = frame.spacing;
  return acc * (frame.dim === 1 ? h : h * h);
}
