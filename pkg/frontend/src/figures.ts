/** Figure builders over run directories.
 *
 * Every renderer consumes only the documented run outputs (manifest.json,
 * iterations.csv / gmu.csv / sweep.csv, per-frame field CSVs) and never
 * recomputes solver quantities beyond norms and distances of loaded data.
 * Numeric annotations that also exist in a manifest are cross-checked to
 * 1e-9 and rendering fails on a mismatch.
 */

import { writeFileSync } from "node:fs";
import { join } from "node:path";

import { Frame, MissingDataError, RunArtifact, l1Distance, mass } from "./artifact.js";
import { numericColumn } from "./csv.js";
import { Panel, document as svgDocument, extent, legend, seriesColor } from "./svg.js";

export const FIGURE_KINDS = [
  "steady-profile",
  "space-time",
  "loss-history",
  "g-mu",
  "density-overlay",
  "sweep",
  "snapshots-2d",
] as const;

export type FigureKind = (typeof FIGURE_KINDS)[number];

export interface RenderInfo {
  kind: FigureKind;
  outPath: string;
  /** numeric annotations drawn on the figure */
  annotations: Record<string, number>;
}

const TOL = 1e-9;

function checkAgainstManifest(label: string, recomputed: number, recorded: number): void {
  if (Math.abs(recomputed - recorded) > TOL * Math.max(1, Math.abs(recorded)))
    throw new Error(
      `${label} recomputed from CSV (${recomputed}) does not match the manifest (${recorded}) within 1e-9`,
    );
}

export function render(runDir: string, kind: string, outPath: string): RenderInfo {
  const builder = BUILDERS[kind as FigureKind];
  if (!builder)
    throw new MissingDataError(
      `unknown figure kind ${kind}; supported: ${FIGURE_KINDS.join(", ")}`,
    );
  const run = RunArtifact.load(runDir);
  const { svg, annotations } = builder(run);
  writeFileSync(outPath, svg);
  return { kind: kind as FigureKind, outPath, annotations };
}

type Built = { svg: string; annotations: Record<string, number> };

const BUILDERS: Record<FigureKind, (run: RunArtifact) => Built> = {
  "steady-profile": steadyProfile,
  "space-time": spaceTime,
  "loss-history": lossHistory,
  "g-mu": gMu,
  "density-overlay": densityOverlay,
  sweep: sweepFigure,
  "snapshots-2d": snapshots2d,
};

function annotationText(x: number, y: number, lines: string[]): string {
  return lines
    .map(
      (s, i) =>
        `<text x="${x}" y="${y + 13 * i}" font-size="10" fill="#444" font-family="monospace">${s}</text>`,
    )
    .join("\n");
}

function steadyProfile(run: RunArtifact): Built {
  const { entry } = run.anyTrajectory("q", "rho");
  const first = run.frame(entry, 0);
  const last = run.frame(entry, -1);
  if (first.dim !== 1) throw new MissingDataError("steady-profile expects a 1D run");
  const x = first.axes[0];
  const [lo, hi] = extent([...first.values[0], ...last.values[0]]);
  const panel = new Panel({
    x: 60, y: 40, width: 520, height: 300,
    xDomain: [x[0], x[x.length - 1]],
    yDomain: [lo, hi + 0.08 * (hi - lo)],
    xLabel: "x", yLabel: "q", title: "steady profile and its drift",
  });
  panel.line(x, first.values[0], seriesColor(0), 2);
  panel.line(x, last.values[0], seriesColor(1), 1.5, "5,3");
  const annotations: Record<string, number> = {
    residual: run.diagnostic("residual"),
    self_evolution_sup_drift: run.diagnostic("self_evolution_sup_drift"),
  };
  const body =
    panel.render() +
    legend(480, 56, [
      { label: `t = ${entry.times[0]}`, color: seriesColor(0) },
      { label: `t = ${entry.times[entry.times.length - 1]}`, color: seriesColor(1) },
    ]) +
    annotationText(66, 380, [
      `residual(T-velocity) = ${annotations.residual.toExponential(3)}`,
      `sup drift over window = ${annotations.self_evolution_sup_drift.toExponential(3)}`,
    ]);
  return { svg: svgDocument(640, 400, body), annotations };
}

function spaceTime(run: RunArtifact): Built {
  const { name, entry } = run.anyTrajectory("rho", "q");
  const frames = entry.csv_frames ?? [];
  if (frames.length < 2) throw new MissingDataError("space-time needs at least two stored frames");
  const maxCols = 160;
  const step = Math.max(1, Math.ceil(frames.length / maxCols));
  const picked: Frame[] = [];
  const times: number[] = [];
  for (let i = 0; i < frames.length; i += step) {
    picked.push(run.frame(entry, i));
    times.push(entry.times[i]);
  }
  if (picked[0].dim !== 1) throw new MissingDataError("space-time expects a 1D run");
  const x = picked[0].axes[0];
  const grid = picked.map((f) => f.values[0]);
  const flat = grid.flat();
  const [lo, hi] = extent(flat);
  const panel = new Panel({
    x: 60, y: 40, width: 520, height: 320,
    xDomain: [times[0], times[times.length - 1]],
    yDomain: [x[0], x[x.length - 1]],
    xLabel: "s", yLabel: "x", title: `${name}(x, s)`,
  });
  panel.cells(times, x, grid, lo, hi);
  const terminalMass = mass(picked[picked.length - 1]);
  const body =
    panel.render() +
    annotationText(66, 390, [
      `terminal mass = ${terminalMass.toPrecision(10)}`,
      `value range = [${lo.toPrecision(4)}, ${hi.toPrecision(4)}]`,
    ]);
  return { svg: svgDocument(640, 410, body), annotations: { terminal_mass: terminalMass } };
}

function lossHistory(run: RunArtifact): Built {
  const loss = run.manifest.loss_history;
  if (!loss || loss.length === 0)
    throw new MissingDataError(`run ${run.dir} records no loss_history`);
  const table = run.csvTable("iterations.csv");
  const totals = numericColumn(table, "total");
  totals.forEach((v, i) => checkAgainstManifest(`iterations.csv total[${i}]`, v, loss[i + 1]));
  const dq = numericColumn(table, "d_q");
  const da = numericColumn(table, "d_alpha");
  const n = loss.map((_, i) => i);

  const top = new Panel({
    x: 60, y: 40, width: 520, height: 180,
    xDomain: [0, n[n.length - 1]],
    yDomain: extent(loss),
    yLabel: "total cost", title: "cost and update distances per iteration",
  });
  top.line(n, loss, seriesColor(0), 2).dots(n, loss, seriesColor(0));

  const logs = [...dq, ...da].filter((v) => v > 0).map(Math.log10);
  const bottom = new Panel({
    x: 60, y: 270, width: 520, height: 140,
    xDomain: [0, n[n.length - 1]],
    yDomain: extent(logs),
    xLabel: "iteration", yLabel: "log10 d",
  });
  bottom.line(n.slice(1), dq.map(Math.log10), seriesColor(1), 1.5);
  bottom.line(n.slice(1), da.map(Math.log10), seriesColor(2), 1.5, "5,3");

  const final = loss[loss.length - 1];
  const body =
    top.render() +
    bottom.render() +
    legend(470, 285, [
      { label: "d_q", color: seriesColor(1) },
      { label: "d_alpha", color: seriesColor(2) },
    ]) +
    annotationText(66, 445, [`final cost = ${final.toPrecision(10)}`]);
  return { svg: svgDocument(640, 460, body), annotations: { final_cost: final } };
}

function gMu(run: RunArtifact): Built {
  const table = run.csvTable("gmu.csv");
  const iters = numericColumn(table, "iteration");
  const mus = numericColumn(table, "mu");
  const gs = numericColumn(table, "g");
  if (iters.length === 0) throw new MissingDataError("gmu.csv is empty");
  const groups = new Map<number, { mu: number[]; g: number[] }>();
  iters.forEach((it, i) => {
    const g = groups.get(it) ?? { mu: [], g: [] };
    g.mu.push(mus[i]);
    g.g.push(gs[i]);
    groups.set(it, g);
  });
  const shown = [...groups.keys()].sort((a, b) => a - b).slice(0, 6);
  const all = shown.flatMap((k) => groups.get(k)!.g);
  const panel = new Panel({
    x: 60, y: 40, width: 520, height: 320,
    xDomain: [0, 1],
    yDomain: extent([...all, 0]),
    xLabel: "mu", yLabel: "g(mu)", title: "line-search improvement curves",
  });
  panel.hline(0);
  shown.forEach((k, i) => {
    const { mu, g } = groups.get(k)!;
    panel.line(mu, g, seriesColor(i), 1.6);
    panel.dots(mu, g, seriesColor(i), 2);
  });
  const g1 = Math.max(
    ...shown.map((k) => {
      const { mu, g } = groups.get(k)!;
      const idx = mu.findIndex((m) => m === 1);
      return idx >= 0 ? Math.abs(g[idx]) : NaN;
    }),
  );
  const body =
    panel.render() +
    legend(486, 56, shown.map((k, i) => ({ label: `iteration ${k}`, color: seriesColor(i) }))) +
    annotationText(66, 390, [`max |g(1)| over shown iterations = ${g1.toExponential(3)}`]);
  return { svg: svgDocument(640, 410, body), annotations: { max_abs_g_at_one: g1 } };
}

function densityOverlay(run: RunArtifact): Built {
  const refDir = run.referenceDir();
  const ref = RunArtifact.load(refDir);
  const mine = run.frame(run.anyTrajectory("rho", "q").entry, -1);
  const theirs = ref.frame(ref.anyTrajectory("rho", "q").entry, -1);
  if (mine.dim !== 1) throw new MissingDataError("density-overlay expects 1D runs");
  const l1 = l1Distance(mine, theirs);
  checkAgainstManifest("L1 terminal distance", l1, run.diagnostic("l1_terminal_vs_reference"));
  const x = mine.axes[0];
  const panel = new Panel({
    x: 60, y: 40, width: 520, height: 300,
    xDomain: [x[0], x[x.length - 1]],
    yDomain: extent([...mine.values[0], ...theirs.values[0]]),
    xLabel: "x", yLabel: "density", title: "terminal density: run vs reference",
  });
  panel.line(x, theirs.values[0], seriesColor(0), 2);
  panel.line(x, mine.values[0], seriesColor(1), 1.6, "5,3");
  const body =
    panel.render() +
    legend(470, 56, [
      { label: "reference", color: seriesColor(0) },
      { label: "this run", color: seriesColor(1) },
    ]) +
    annotationText(66, 378, [`L1 distance = ${l1.toPrecision(10)}`]);
  return { svg: svgDocument(640, 400, body), annotations: { l1_terminal_vs_reference: l1 } };
}

function sweepFigure(run: RunArtifact): Built {
  const table = run.csvTable("sweep.csv");
  const values = numericColumn(table, "value");
  const totals = numericColumn(table, "total_cost");
  const dirs = table.rows.map((r) => String(r[table.header.indexOf("dir")]));
  // integrity: each aggregate row echoes its child manifest's total
  dirs.forEach((d, i) => {
    try {
      const child = RunArtifact.load(resolveChildDir(run.dir, d));
      if (child.manifest.cost)
        checkAgainstManifest(`sweep row ${i} total`, totals[i], child.manifest.cost.total);
    } catch (err) {
      if (!(err instanceof MissingDataError)) throw err;
    }
  });
  const panel = new Panel({
    x: 60, y: 40, width: 520, height: 300,
    xDomain: extent(values),
    yDomain: extent(totals),
    xLabel: "swept value", yLabel: "optimal total cost", title: "parameter sweep",
  });
  panel.line(values, totals, seriesColor(0), 2);
  panel.dots(values, totals, seriesColor(0), 3.5);
  const best = Math.min(...totals);
  const body = panel.render() + annotationText(66, 378, [`min total cost = ${best.toPrecision(10)}`]);
  return { svg: svgDocument(640, 400, body), annotations: { min_total_cost: best } };
}

function resolveChildDir(runDir: string, recorded: string): string {
  const parts = recorded.split(/[\\/]/);
  return join(runDir, parts[parts.length - 1]);
}

function snapshots2d(run: RunArtifact): Built {
  const { name, entry } = run.anyTrajectory("q", "rho");
  const frames = entry.csv_frames ?? [];
  if (frames.length === 0) throw new MissingDataError("snapshots-2d needs stored CSV frames");
  const count = Math.min(4, frames.length);
  const idx = [...Array(count).keys()].map((i) =>
    Math.round((i * (frames.length - 1)) / Math.max(count - 1, 1)),
  );
  const snaps = idx.map((i) => run.frame(entry, i));
  if (snaps[0].dim !== 2) throw new MissingDataError("snapshots-2d expects a 2D run");
  const flat = snaps.flatMap((f) => f.values.flat());
  const [lo, hi] = extent(flat);
  const size = 190;
  const panels = snaps.map((f, k) => {
    const [x, y] = f.axes;
    const panel = new Panel({
      x: 50 + k * (size + 30), y: 50, width: size, height: size,
      xDomain: [x[0], x[x.length - 1]],
      yDomain: [y[0], y[y.length - 1]],
      xLabel: "x", yLabel: k === 0 ? "y" : undefined,
      title: `${name}, t = ${Number(entry.times[idx[k]].toPrecision(4))}`,
    });
    panel.cells(x, y, f.values, lo, hi);
    return panel.render();
  });
  const terminalMass = mass(snaps[snaps.length - 1]);
  const width = 50 + count * (size + 30);
  const body =
    panels.join("\n") +
    annotationText(56, 50 + size + 50, [
      `terminal mass = ${terminalMass.toPrecision(10)}`,
      `value range = [${lo.toPrecision(4)}, ${hi.toPrecision(4)}]`,
    ]);
  return {
    svg: svgDocument(width, size + 130, body),
    annotations: { terminal_mass: terminalMass },
  };
}
