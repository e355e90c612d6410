/** Minimal CSV reading for the fixed-header files the CLI emits. */

export interface Table {
  header: string[];
  rows: Record<string, string>[];
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new Error("empty CSV");
  }
  const header = lines[0].split(",");
  const rows = lines.slice(1).map((line) => {
    const cells = line.split(",");
    const row: Record<string, string> = {};
    header.forEach((name, i) => {
      row[name] = cells[i] ?? "";
    });
    return row;
  });
  return { header, rows };
}

/** Numeric column; blank cells become null. */
export function numeric(rows: Record<string, string>[], column: string): (number | null)[] {
  return rows.map((row) => {
    const cell = row[column];
    if (cell === undefined || cell === "") return null;
    const value = Number(cell);
    return Number.isFinite(value) ? value : null;
  });
}

export interface Series {
  label: string;
  x: number[];
  y: number[];
}

/** Paired finite samples of two columns, dropping incomplete rows. */
export function pairedSeries(
  rows: Record<string, string>[],
  xColumn: string,
  yColumn: string,
  label: string,
): Series {
  const xs = numeric(rows, xColumn);
  const ys = numeric(rows, yColumn);
  const x: number[] = [];
  const y: number[] = [];
  for (let i = 0; i < rows.length; i++) {
    const xv = xs[i];
    const yv = ys[i];
    if (xv !== null && yv !== null) {
      x.push(xv);
      y.push(yv);
    }
  }
  return { label, x, y };
}
