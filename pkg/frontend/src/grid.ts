/** Paging and sort-cycling arithmetic for the data grid. */

export interface PageState {
  offset: number;
  limit: number;
  total: number;
}

export function pageCount(total: number, limit: number): number {
  if (limit <= 0) return 1;
  return Math.max(1, Math.ceil(total / limit));
}

export function currentPage(state: PageState): number {
  if (state.limit <= 0) return 1;
  return Math.floor(state.offset / state.limit) + 1;
}

export function clampOffset(offset: number, total: number, limit: number): number {
  if (total <= 0 || limit <= 0) return 0;
  const last = (pageCount(total, limit) - 1) * limit;
  return Math.min(Math.max(0, offset), last);
}

export function nextOffset(state: PageState): number {
  return clampOffset(state.offset + state.limit, state.total, state.limit);
}

export function prevOffset(state: PageState): number {
  return clampOffset(state.offset - state.limit, state.total, state.limit);
}

/** Clicking a header cycles: unsorted -> ascending -> descending -> ascending. */
export function toggleSort(current: string | null, field: string): string {
  if (current === field) return `-${field}`;
  return field;
}

export function sortField(sort: string | null): string | null {
  if (!sort) return null;
  return sort.startsWith("-") ? sort.slice(1) : sort;
}

export function sortDescending(sort: string | null): boolean {
  return !!sort && sort.startsWith("-");
}
