#!/usr/bin/env node
/** Figure renderer entry point: mfgflow-figures <run_dir> <figure_kind> <out_path> */

import { FIGURE_KINDS, render } from "./figures.js";

const [, , runDir, kind, outPath] = process.argv;

if (!runDir || !kind || !outPath) {
  console.error("usage: mfgflow-figures <run_dir> <figure_kind> <out_path>");
  console.error(`figure kinds: ${FIGURE_KINDS.join(", ")}`);
  process.exit(1);
}

try {
  const info = render(runDir, kind, outPath);
  console.log(JSON.stringify({ written: info.outPath, annotations: info.annotations }));
} catch (err) {
  console.error(`error: ${err instanceof Error ? err.message : err}`);
  process.exit(1);
}
