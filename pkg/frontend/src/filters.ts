/** Filter drafts: the visual predicate rows behind the query builder.
 *
 * A draft mirrors the server's filter form (a conjunction list plus a
 * disjunction list) and serializes to exactly the JSON the API accepts.
 * Field/op compatibility mirrors the server's table, so incompatible pairs
 * are never offered in the builder.
 */

import type { SchemaField } from "./api.js";

export const ALL_OPS = ["eq", "ne", "lt", "le", "gt", "ge", "contains", "in"] as const;
export type Op = (typeof ALL_OPS)[number];

export interface PredicateDraft {
  field: string;
  op: Op;
  /** raw user text; parsed per the field's type on serialization */
  raw: string;
}

export interface FilterDraft {
  all: PredicateDraft[];
  any: PredicateDraft[];
}

export interface WirePredicate {
  field: string;
  op: Op;
  value: unknown;
}

export interface WireFilter {
  all: WirePredicate[];
  any: WirePredicate[];
}

export class DraftError extends Error {
  constructor(
    public clause: "all" | "any",
    public index: number,
    message: string,
  ) {
    super(message);
  }
}

const ORDERING_OPS: Op[] = ["lt", "le", "gt", "ge"];
const ORDERABLE_TYPES = ["int", "float", "date"];

export function opsForType(ftype: SchemaField["ftype"]): Op[] {
  return ALL_OPS.filter((op) => {
    if (op === "contains") return ftype === "string";
    if (ORDERING_OPS.includes(op)) return ORDERABLE_TYPES.includes(ftype);
    return true;
  });
}

export function emptyDraft(): FilterDraft {
  return { all: [], any: [] };
}

export function isEmpty(draft: FilterDraft): boolean {
  return draft.all.length === 0 && draft.any.length === 0;
}

export function parseScalar(raw: string, ftype: SchemaField["ftype"]): unknown {
  const text = raw.trim();
  if (text === "") {
    throw new Error("value is required");
  }
  switch (ftype) {
    case "string":
      return raw;
    case "int": {
      if (!/^[+-]?\d+$/.test(text)) throw new Error(`not an int: ${text}`);
      return Number(text);
    }
    case "float": {
      const value = Number(text);
      if (!Number.isFinite(value)) throw new Error(`not a number: ${text}`);
      return value;
    }
    case "bool": {
      const lowered = text.toLowerCase();
      if (lowered === "true") return true;
      if (lowered === "false") return false;
      throw new Error(`not true/false: ${text}`);
    }
    case "date": {
      if (!/^\d{4}-\d{2}-\d{2}$/.test(text)) throw new Error(`not YYYY-MM-DD: ${text}`);
      return text; // the wire form carries dates as ISO strings
    }
  }
}

function parseLiteral(p: PredicateDraft, ftype: SchemaField["ftype"]): unknown {
  if (p.op === "in") {
    const parts = p.raw.split(",").filter((part) => part.trim() !== "");
    return parts.map((part) => parseScalar(ftype === "string" ? part : part.trim(), ftype));
  }
  return parseScalar(p.raw, ftype);
}

export function draftToWire(draft: FilterDraft, fields: SchemaField[]): WireFilter {
  const types = new Map(fields.map((f) => [f.fname, f.ftype]));
  const convert = (clause: "all" | "any") =>
    draft[clause].map((p, index) => {
      const ftype = types.get(p.field);
      if (!ftype) throw new DraftError(clause, index, `unknown field ${p.field}`);
      if (!opsForType(ftype).includes(p.op)) {
        throw new DraftError(clause, index, `${p.op} does not apply to ${ftype}`);
      }
      try {
        return { field: p.field, op: p.op, value: parseLiteral(p, ftype) };
      } catch (err) {
        throw new DraftError(clause, index, (err as Error).message);
      }
    });
  return { all: convert("all"), any: convert("any") };
}
