/** Minimal SVG figure assembly: linear scales, axes, polylines, markers. */

export interface Margin {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export const DEFAULT_MARGIN: Margin = { top: 36, right: 24, bottom: 48, left: 64 };

export class LinearScale {
  constructor(
    readonly domainMin: number,
    readonly domainMax: number,
    readonly rangeMin: number,
    readonly rangeMax: number,
  ) {}

  apply(x: number): number {
    const t = (x - this.domainMin) / (this.domainMax - this.domainMin);
    return this.rangeMin + t * (this.rangeMax - this.rangeMin);
  }

  invert(px: number): number {
    const t = (px - this.rangeMin) / (this.rangeMax - this.rangeMin);
    return this.domainMin + t * (this.domainMax - this.domainMin);
  }

  ticks(count = 5): number[] {
    const span = this.domainMax - this.domainMin;
    if (span <= 0) return [this.domainMin];
    const step = niceStep(span / count);
    const start = Math.ceil(this.domainMin / step) * step;
    const out: number[] = [];
    for (let v = start; v <= this.domainMax + 1e-12; v += step) {
      out.push(Number(v.toPrecision(12)));
    }
    return out;
  }
}

function niceStep(raw: number): number {
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const norm = raw / mag;
  if (norm < 1.5) return mag;
  if (norm < 3.5) return 2 * mag;
  if (norm < 7.5) return 5 * mag;
  return 10 * mag;
}

export function formatTick(v: number): string {
  if (v === 0) return "0";
  const abs = Math.abs(v);
  if (abs >= 1000 || abs < 0.001) return v.toExponential(1);
  return Number(v.toPrecision(6)).toString();
}

export interface Series {
  label: string;
  color: string;
  dash?: string;
  points: Array<{ x: number; y: number; yerr?: number }>;
}

export interface FigureSpec {
  width: number;
  height: number;
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  margin?: Margin;
  showMarkers?: boolean;
}

export function renderFigure(spec: FigureSpec): string {
  const margin = spec.margin ?? DEFAULT_MARGIN;
  const innerW = spec.width - margin.left - margin.right;
  const innerH = spec.height - margin.top - margin.bottom;
  const xs = spec.series.flatMap((s) => s.points.map((p) => p.x));
  const ys = spec.series.flatMap((s) =>
    s.points.flatMap((p) => [p.y - (p.yerr ?? 0), p.y + (p.yerr ?? 0)]),
  );
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const ySpan = Math.max(...ys) - Math.min(0, Math.min(...ys));
  const yMin = Math.min(0, Math.min(...ys));
  const yMax = Math.max(...ys) + 0.05 * (ySpan || 1);
  const xScale = new LinearScale(xMin, xMax, margin.left, margin.left + innerW);
  const yScale = new LinearScale(yMin, yMax, margin.top + innerH, margin.top);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${spec.width}" ` +
      `height="${spec.height}" viewBox="0 0 ${spec.width} ${spec.height}" ` +
      `data-x-domain="${xMin} ${xMax}" data-y-domain="${yMin} ${yMax}" ` +
      `data-x-range="${margin.left} ${margin.left + innerW}" ` +
      `data-y-range="${margin.top + innerH} ${margin.top}">`,
  );
  parts.push(`<rect width="100%" height="100%" fill="white"/>`);
  parts.push(
    `<text x="${spec.width / 2}" y="20" text-anchor="middle" ` +
      `font-family="sans-serif" font-size="14">${spec.title}</text>`,
  );

  // axes
  const axisY = margin.top + innerH;
  parts.push(
    `<line x1="${margin.left}" y1="${axisY}" x2="${margin.left + innerW}" ` +
      `y2="${axisY}" stroke="black"/>`,
    `<line x1="${margin.left}" y1="${margin.top}" x2="${margin.left}" ` +
      `y2="${axisY}" stroke="black"/>`,
  );
  for (const t of xScale.ticks(6)) {
    const px = xScale.apply(t);
    parts.push(
      `<line x1="${px}" y1="${axisY}" x2="${px}" y2="${axisY + 5}" stroke="black"/>`,
      `<text x="${px}" y="${axisY + 18}" text-anchor="middle" ` +
        `font-family="sans-serif" font-size="10">${formatTick(t)}</text>`,
    );
  }
  for (const t of yScale.ticks(6)) {
    const py = yScale.apply(t);
    parts.push(
      `<line x1="${margin.left - 5}" y1="${py}" x2="${margin.left}" y2="${py}" stroke="black"/>`,
      `<text x="${margin.left - 8}" y="${py + 3}" text-anchor="end" ` +
        `font-family="sans-serif" font-size="10">${formatTick(t)}</text>`,
    );
  }
  parts.push(
    `<text x="${margin.left + innerW / 2}" y="${spec.height - 10}" ` +
      `text-anchor="middle" font-family="sans-serif" font-size="12">${spec.xLabel}</text>`,
    `<text x="16" y="${margin.top + innerH / 2}" text-anchor="middle" ` +
      `font-family="sans-serif" font-size="12" ` +
      `transform="rotate(-90 16 ${margin.top + innerH / 2})">${spec.yLabel}</text>`,
  );

  // series
  spec.series.forEach((s, idx) => {
    const pts = s.points
      .map((p) => `${xScale.apply(p.x)},${yScale.apply(p.y)}`)
      .join(" ");
    const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
    parts.push(
      `<polyline data-series="${s.label}" fill="none" stroke="${s.color}"` +
        `${dash} stroke-width="1.5" points="${pts}"/>`,
    );
    for (const p of s.points) {
      const px = xScale.apply(p.x);
      if (p.yerr !== undefined && p.yerr > 0) {
        const lo = yScale.apply(p.y - p.yerr);
        const hi = yScale.apply(p.y + p.yerr);
        parts.push(
          `<line data-errorbar="${s.label}" x1="${px}" y1="${lo}" x2="${px}" ` +
            `y2="${hi}" stroke="${s.color}"/>`,
          `<line x1="${px - 3}" y1="${lo}" x2="${px + 3}" y2="${lo}" stroke="${s.color}"/>`,
          `<line x1="${px - 3}" y1="${hi}" x2="${px + 3}" y2="${hi}" stroke="${s.color}"/>`,
        );
      }
      if (spec.showMarkers ?? true) {
        parts.push(
          `<circle data-point="${s.label}" cx="${px}" ` +
            `cy="${yScale.apply(p.y)}" r="2.5" fill="${s.color}"/>`,
        );
      }
    }
    // legend entry
    const ly = margin.top + 14 * idx;
    const lx = margin.left + innerW - 150;
    parts.push(
      `<line x1="${lx}" y1="${ly}" x2="${lx + 22}" y2="${ly}" ` +
        `stroke="${s.color}"${dash} stroke-width="1.5"/>`,
      `<text x="${lx + 28}" y="${ly + 3}" font-family="sans-serif" ` +
        `font-size="10">${s.label}</text>`,
    );
  });
  parts.push("</svg>");
  return parts.join("\n");
}
