/** Helpers for the table-upload view: map positioned diagnostics onto the
 * rendered preview so each finding links to its cell. */

import type { Diagnostic } from "./api.js";

export function cellKey(row: number, col: number): string {
  return `${row}:${col}`;
}

/** Cells to highlight in the preview, keyed "row:col" (1-based). */
export function diagnosticCells(diagnostics: Diagnostic[]): Set<string> {
  const cells = new Set<string>();
  for (const d of diagnostics) {
    if (d.row !== null && d.col !== null) {
      cells.add(cellKey(d.row, d.col));
    }
  }
  return cells;
}

export function describeDiagnostic(d: Diagnostic): string {
  const where = d.row !== null ? ` @ row ${d.row}, col ${d.col}` : "";
  return `[${d.rule}] ${d.message}${where}`;
}
