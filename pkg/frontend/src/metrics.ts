/** Parsing for the training library's metrics CSV files. */

export class SchemaError extends Error {}

export const REQUIRED_COLUMNS = [
  "epoch", "phase", "loss", "train_acc", "test_acc", "lr", "win_freq_cv",
] as const;

export interface MetricsRow {
  epoch: number;
  phase: string;
  loss: number;
  train_acc: number;
  test_acc: number;
  lr: number;
  win_freq_cv: number;
}

export function parseMetricsCsv(text: string, source: string): MetricsRow[] {
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${source}: empty file`);
  }
  const header = lines[0].split(",");
  const index = new Map(header.map((name, i) => [name, i]));
  const missing = REQUIRED_COLUMNS.filter((c) => !index.has(c));
  if (missing.length > 0) {
    throw new SchemaError(`${source}: missing column(s) ${missing.join(", ")}`);
  }
  const rows: MetricsRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== header.length) {
      throw new SchemaError(
        `${source}:${i + 1}: ${cells.length} cells for ${header.length} columns`);
    }
    const num = (col: string) => Number(cells[index.get(col)!]);
    rows.push({
      epoch: num("epoch"),
      phase: cells[index.get("phase")!],
      loss: num("loss"),
      train_acc: num("train_acc"),
      test_acc: num("test_acc"),
      lr: num("lr"),
      win_freq_cv: num("win_freq_cv"),
    });
  }
  return rows;
}
