/**
 * Strict reader for the simulator's sweep CSV. The header must match the
 * producer byte for byte; malformed rows fail loudly with their line number.
 */

export const EXPECTED_HEADER =
  "policy,tdi_regime,arrival_rate_pkt_s,seed,mean_delay_s,se_delay_s," +
  "mean_prr,mean_rate_bps,mean_queue_pkts,overflow_frac";

export interface SweepRow {
  policy: string;
  tdiRegime: string;
  arrivalRate: number;
  seed: number;
  meanDelayS: number;
  seDelayS: number;
  meanPrr: number;
  meanRateBps: number;
  meanQueuePkts: number;
  overflowFrac: number;
}

export class CsvSchemaError extends Error {}

function numeric(raw: string, line: number, column: string): number {
  const value = Number(raw);
  if (raw.trim() === "" || Number.isNaN(value)) {
    throw new CsvSchemaError(
      `row ${line}: column ${column} is not numeric: ${JSON.stringify(raw)}`,
    );
  }
  return value;
}

export function parseSweepCsv(text: string): SweepRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new CsvSchemaError("empty CSV: no header found");
  }
  if (lines[0] !== EXPECTED_HEADER) {
    throw new CsvSchemaError(
      `header mismatch:\n  expected ${EXPECTED_HEADER}\n  found    ${lines[0]}`,
    );
  }
  if (lines.length === 1) {
    throw new CsvSchemaError("empty CSV: header but no data rows");
  }
  const rows: SweepRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== 10) {
      throw new CsvSchemaError(
        `row ${i + 1}: expected 10 columns, found ${parts.length}`,
      );
    }
    rows.push({
      policy: parts[0],
      tdiRegime: parts[1],
      arrivalRate: numeric(parts[2], i + 1, "arrival_rate_pkt_s"),
      seed: numeric(parts[3], i + 1, "seed"),
      meanDelayS: numeric(parts[4], i + 1, "mean_delay_s"),
      seDelayS: numeric(parts[5], i + 1, "se_delay_s"),
      meanPrr: numeric(parts[6], i + 1, "mean_prr"),
      meanRateBps: numeric(parts[7], i + 1, "mean_rate_bps"),
      meanQueuePkts: numeric(parts[8], i + 1, "mean_queue_pkts"),
      overflowFrac: numeric(parts[9], i + 1, "overflow_frac"),
    });
  }
  return rows;
}
