#!/usr/bin/env node
/**
 * plots <kind> --in <csv> --out <img> [--vfree <v>] [--kjam <k>]
 *
 * Kinds: greenshield (flow-density curve, needs --vfree/--kjam) and
 * delay_vs_rate (per-policy/per-regime delay lines from a sweep CSV).
 * Output is an SVG written to --out; nothing is written on failure.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseSweepCsv } from "./csv.js";
import { delayFigure, greenshieldFigure } from "./figures.js";

interface Args {
  kind: string;
  flags: Map<string, string>;
}

export function parseArgs(argv: string[]): Args {
  if (argv.length === 0 || argv[0].startsWith("--")) {
    throw new Error("usage: plots <greenshield|delay_vs_rate> --out <img> ...");
  }
  const kind = argv[0];
  const flags = new Map<string, string>();
  for (let i = 1; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed flag near ${JSON.stringify(argv[i])}`);
    }
    flags.set(argv[i].slice(2), argv[i + 1]);
  }
  return { kind, flags };
}

export function buildFigure(args: Args): string {
  switch (args.kind) {
    case "greenshield": {
      const vFree = Number(args.flags.get("vfree") ?? "13.9");
      const kappaJam = Number(args.flags.get("kjam") ?? "2.0");
      return greenshieldFigure(vFree, kappaJam);
    }
    case "delay_vs_rate": {
      const input = args.flags.get("in");
      if (!input) throw new Error("delay_vs_rate requires --in <csv>");
      const rows = parseSweepCsv(readFileSync(input, "utf-8"));
      return delayFigure(rows);
    }
    default:
      throw new Error(`unknown figure kind ${JSON.stringify(args.kind)}`);
  }
}

export function main(argv: string[]): number {
  try {
    const args = parseArgs(argv);
    const out = args.flags.get("out");
    if (!out) throw new Error("--out <img> is required");
    const svg = buildFigure(args);
    writeFileSync(out, svg + "\n");
    return 0;
  } catch (err) {
    console.error(`plots: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("plots")) {
  process.exit(main(process.argv.slice(2)));
}
