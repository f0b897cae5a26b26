/** Small SVG scene builder: axes, polylines, heatmap cells, annotations. */

export interface Scale {
  (v: number): number;
  domain: [number, number];
}

export function linScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 || 1;
  const f = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  f.domain = [d0, d1];
  return f;
}

export function extent(values: Iterable<number>): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (!Number.isFinite(v)) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo > hi) return [0, 1];
  if (lo === hi) return [lo - 1, hi + 1];
  return [lo, hi];
}

export function ticks(lo: number, hi: number, count = 5): number[] {
  const span = hi - lo || 1;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = (span / count) / step;
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * mult;
  const start = Math.ceil(lo / s) * s;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-12 * Math.abs(hi); v += s) out.push(Number(v.toPrecision(12)));
  return out;
}

const fmt = (v: number) => {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return Number(v.toPrecision(4)).toString();
};

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

/** Perceptually ordered dark-to-bright colormap (piecewise-linear anchors). */
export function colormap(t: number): string {
  const anchors: [number, number, number][] = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
  ];
  const x = Math.min(Math.max(t, 0), 1) * (anchors.length - 1);
  const i = Math.min(Math.floor(x), anchors.length - 2);
  const f = x - i;
  const c = anchors[i].map((a, k) => Math.round(a + f * (anchors[i + 1][k] - a)));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

export function seriesColor(i: number): string {
  return PALETTE[i % PALETTE.length];
}

export interface PanelOptions {
  x: number;
  y: number;
  width: number;
  height: number;
  xDomain: [number, number];
  yDomain: [number, number];
  xLabel?: string;
  yLabel?: string;
  title?: string;
}

/** One plotting panel with framed axes; children are added in data space. */
export class Panel {
  readonly sx: Scale;
  readonly sy: Scale;
  private parts: string[] = [];
  constructor(readonly opts: PanelOptions) {
    this.sx = linScale(opts.xDomain[0], opts.xDomain[1], opts.x, opts.x + opts.width);
    this.sy = linScale(opts.yDomain[0], opts.yDomain[1], opts.y + opts.height, opts.y);
  }

  line(xs: number[], ys: number[], color: string, width = 1.5, dash?: string): this {
    const pts = xs
      .map((x, i) => `${this.sx(x).toFixed(2)},${this.sy(ys[i]).toFixed(2)}`)
      .join(" ");
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${color}" stroke-width="${width}"${d}/>`,
    );
    return this;
  }

  dots(xs: number[], ys: number[], color: string, r = 3): this {
    for (let i = 0; i < xs.length; i++)
      this.parts.push(
        `<circle cx="${this.sx(xs[i]).toFixed(2)}" cy="${this.sy(ys[i]).toFixed(2)}" r="${r}" fill="${color}"/>`,
      );
    return this;
  }

  hline(yv: number, color = "#999", dash = "4,3"): this {
    const y = this.sy(yv).toFixed(2);
    this.parts.push(
      `<line x1="${this.opts.x}" y1="${y}" x2="${this.opts.x + this.opts.width}" y2="${y}" stroke="${color}" stroke-dasharray="${dash}"/>`,
    );
    return this;
  }

  /** Heatmap over cell centers (xs by ys), colored by values[i][j]. */
  cells(xs: number[], ys: number[], values: number[][], lo: number, hi: number): this {
    const span = hi - lo || 1;
    const w = (this.opts.width / xs.length).toFixed(3);
    const h = (this.opts.height / ys.length).toFixed(3);
    for (let i = 0; i < xs.length; i++) {
      for (let j = 0; j < ys.length; j++) {
        const color = colormap((values[i][j] - lo) / span);
        const px = (this.opts.x + (i * this.opts.width) / xs.length).toFixed(2);
        const py = (this.opts.y + this.opts.height - ((j + 1) * this.opts.height) / ys.length).toFixed(2);
        this.parts.push(`<rect x="${px}" y="${py}" width="${w}" height="${h}" fill="${color}"/>`);
      }
    }
    return this;
  }

  render(): string {
    const { x, y, width, height, xLabel, yLabel, title } = this.opts;
    const out: string[] = [];
    out.push(`<rect x="${x}" y="${y}" width="${width}" height="${height}" fill="none" stroke="#333"/>`);
    for (const t of ticks(this.sx.domain[0], this.sx.domain[1])) {
      const px = this.sx(t).toFixed(2);
      out.push(`<line x1="${px}" y1="${y + height}" x2="${px}" y2="${y + height + 4}" stroke="#333"/>`);
      out.push(
        `<text x="${px}" y="${y + height + 16}" font-size="10" text-anchor="middle" fill="#333">${fmt(t)}</text>`,
      );
    }
    for (const t of ticks(this.sy.domain[0], this.sy.domain[1])) {
      const py = this.sy(t).toFixed(2);
      out.push(`<line x1="${x - 4}" y1="${py}" x2="${x}" y2="${py}" stroke="#333"/>`);
      out.push(
        `<text x="${x - 6}" y="${Number(py) + 3}" font-size="10" text-anchor="end" fill="#333">${fmt(t)}</text>`,
      );
    }
    if (xLabel)
      out.push(
        `<text x="${x + width / 2}" y="${y + height + 32}" font-size="11" text-anchor="middle" fill="#111">${esc(xLabel)}</text>`,
      );
    if (yLabel)
      out.push(
        `<text x="${x - 38}" y="${y + height / 2}" font-size="11" text-anchor="middle" fill="#111" transform="rotate(-90 ${x - 38} ${y + height / 2})">${esc(yLabel)}</text>`,
      );
    if (title)
      out.push(
        `<text x="${x + width / 2}" y="${y - 8}" font-size="12" font-weight="bold" text-anchor="middle" fill="#111">${esc(title)}</text>`,
      );
    return out.join("\n") + "\n" + this.parts.join("\n");
  }
}

export function legend(x: number, y: number, items: { label: string; color: string }[]): string {
  return items
    .map(
      (it, i) =>
        `<line x1="${x}" y1="${y + i * 14}" x2="${x + 18}" y2="${y + i * 14}" stroke="${it.color}" stroke-width="2"/>` +
        `<text x="${x + 24}" y="${y + i * 14 + 3}" font-size="10" fill="#333">${esc(it.label)}</text>`,
    )
    .join("\n");
}

export function document(width: number, height: number, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">\n` +
    `<rect width="${width}" height="${height}" fill="white"/>\n${body}\n</svg>\n`
  );
}
