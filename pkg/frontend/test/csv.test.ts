import { describe, expect, it } from "vitest";

import { numeric, pairedSeries, parseCsv } from "../src/csv";

describe("parseCsv", () => {
  it("maps header names to cells", () => {
    const table = parseCsv("a,b,c\n1,2,3\n4,,6\n");
    expect(table.header).toEqual(["a", "b", "c"]);
    expect(table.rows).toHaveLength(2);
    expect(table.rows[0]).toEqual({ a: "1", b: "2", c: "3" });
    expect(table.rows[1].b).toBe("");
  });

  it("rejects empty input", () => {
    expect(() => parseCsv("")).toThrow();
  });
});

describe("numeric", () => {
  it("turns blank cells and junk into nulls", () => {
    const table = parseCsv("v,w\n1.5,0\n,0\nnot-a-number,0\n-2e-3,0\n");
    expect(numeric(table.rows, "v")).toEqual([1.5, null, null, -0.002]);
  });
});

describe("pairedSeries", () => {
  it("drops rows with a missing side", () => {
    const table = parseCsv("x,y\n1,10\n2,\n3,30\n");
    const s = pairedSeries(table.rows, "x", "y", "s");
    expect(s.x).toEqual([1, 3]);
    expect(s.y).toEqual([10, 30]);
  });
});
