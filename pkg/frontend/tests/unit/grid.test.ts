import { describe, expect, it } from "vitest";

import {
  clampOffset,
  currentPage,
  nextOffset,
  pageCount,
  prevOffset,
  sortDescending,
  sortField,
  toggleSort,
} from "../../src/grid.js";

describe("paging arithmetic", () => {
  it("splits 60 records into 3 pages of 25", () => {
    expect(pageCount(60, 25)).toBe(3);
    const page1 = { offset: 0, limit: 25, total: 60 };
    expect(currentPage(page1)).toBe(1);
    expect(nextOffset(page1)).toBe(25);
    const page3 = { offset: 50, limit: 25, total: 60 };
    expect(currentPage(page3)).toBe(3);
    expect(nextOffset(page3)).toBe(50); // already on the last page
    expect(prevOffset(page3)).toBe(25);
  });

  it("clamps offsets after deletions shrink the collection", () => {
    expect(clampOffset(50, 20, 25)).toBe(0);
    expect(clampOffset(50, 30, 25)).toBe(25);
    expect(clampOffset(-5, 30, 25)).toBe(0);
  });

  it("has at least one page even when empty", () => {
    expect(pageCount(0, 25)).toBe(1);
    expect(currentPage({ offset: 0, limit: 25, total: 0 })).toBe(1);
  });
});

describe("sort cycling", () => {
  it("cycles none -> asc -> desc -> asc", () => {
    const first = toggleSort(null, "year");
    expect(first).toBe("year");
    const second = toggleSort(first, "year");
    expect(second).toBe("-year");
    expect(toggleSort(second, "year")).toBe("year");
  });

  it("switching fields resets to ascending", () => {
    expect(toggleSort("-year", "price")).toBe("price");
  });

  it("decomposes sort params", () => {
    expect(sortField("-year")).toBe("year");
    expect(sortDescending("-year")).toBe(true);
    expect(sortField(null)).toBe(null);
  });
});
