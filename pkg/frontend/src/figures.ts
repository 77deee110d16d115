/** The two figure kinds: the flow-density parabola and delay-versus-rate. */

import { SweepRow } from "./csv.js";
import { FigureSpec, renderFigure, Series } from "./svg.js";

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#17becf", "#7f7f7f"];

export function greenshieldFlow(
  kappa: number,
  vFree: number,
  kappaJam: number,
): number {
  return kappa * vFree - (kappa * kappa * vFree) / kappaJam;
}

export function greenshieldFigure(vFree: number, kappaJam: number): string {
  if (vFree <= 0 || kappaJam <= 0) {
    throw new Error("free-flow speed and jam density must be positive");
  }
  const n = 200;
  const points = Array.from({ length: n + 1 }, (_, i) => {
    const kappa = (kappaJam * i) / n;
    return { x: kappa, y: greenshieldFlow(kappa, vFree, kappaJam) };
  });
  const series: Series[] = [
    { label: "flow", color: PALETTE[0], points },
  ];
  const peak = greenshieldFlow(kappaJam / 2, vFree, kappaJam);
  const spec: FigureSpec = {
    width: 640,
    height: 420,
    title: "Flow versus density",
    xLabel: "density",
    yLabel: "flow",
    series,
    showMarkers: false,
  };
  let svg = renderFigure(spec);
  // annotate the vertex
  svg = svg.replace(
    "</svg>",
    `<text data-annotation="vertex" x="320" y="60" text-anchor="middle" ` +
      `font-family="sans-serif" font-size="10">peak ${peak.toFixed(2)} at ` +
      `density ${kappaJam / 2}</text>\n</svg>`,
  );
  return svg;
}

export function delayFigure(rows: SweepRow[]): string {
  const groups = new Map<string, SweepRow[]>();
  for (const row of rows) {
    const key = `${row.policy} / ${row.tdiRegime}`;
    const bucket = groups.get(key) ?? [];
    bucket.push(row);
    groups.set(key, bucket);
  }
  const policies = [...new Set(rows.map((r) => r.policy))];
  const rates = new Set(rows.map((r) => r.arrivalRate));
  if (policies.length < 2 || rates.size < 2) {
    throw new Error(
      `need at least 2 policies and 2 arrival rates; ` +
        `found ${policies.length} and ${rates.size}`,
    );
  }
  const regimes = [...new Set(rows.map((r) => r.tdiRegime))];
  const series: Series[] = [...groups.entries()].map(([label, bucket], i) => {
    const sorted = [...bucket].sort((a, b) => a.arrivalRate - b.arrivalRate);
    const policy = label.split(" / ")[0];
    const regime = label.split(" / ")[1];
    return {
      label,
      color: PALETTE[policies.indexOf(policy) % PALETTE.length],
      dash: regimes.indexOf(regime) % 2 === 1 ? "5 3" : undefined,
      points: sorted.map((r) => ({
        x: r.arrivalRate,
        y: r.meanDelayS,
        yerr: r.seDelayS,
      })),
    };
  });
  return renderFigure({
    width: 720,
    height: 480,
    title: "Average delay versus arrival rate",
    xLabel: "arrival rate (packets/s)",
    yLabel: "average delay (s)",
    series,
  });
}
