import { describe, expect, it } from "vitest";

import {
  AuditFormatError,
  agreementMatrix,
  formatF1,
  isEmptyReport,
  parseAuditReport,
} from "../src/audit.js";

function sampleReport(): unknown {
  const categories: Record<string, unknown> = {};
  for (const cat of ["S", "H", "V", "HR", "SH", "S3", "H2", "V2"]) {
    categories[cat] = { tp: 0, fp: 0, fn: 0, tn: 3, f1: null, flagged: false };
  }
  categories["H"] = { tp: 2, fp: 1, fn: 1, tn: 0, f1: 2 / 3, flagged: true };
  return {
    categories,
    sample_ids: ["a", "b", "c"],
    disagreements: { H: ["b", "c"] },
  };
}

describe("f1 formatting", () => {
  it("renders an undefined score as n/a, never as zero", () => {
    expect(formatF1(null)).toBe("n/a");
    expect(formatF1(null)).not.toBe("0.000");
  });

  it("renders a defined score to three decimals", () => {
    expect(formatF1(2 / 3)).toBe("0.667");
    expect(formatF1(0)).toBe("0.000");
    expect(formatF1(1)).toBe("1.000");
  });
});

describe("parsing", () => {
  it("accepts a well-formed report", () => {
    const view = parseAuditReport(sampleReport());
    expect(view.sampleIds).toEqual(["a", "b", "c"]);
    expect(view.categories["H"].f1).toBeCloseTo(2 / 3, 12);
    expect(view.categories["H"].flagged).toBe(true);
    expect(view.categories["S"].f1).toBeNull();
    expect(view.disagreements["H"]).toEqual(["b", "c"]);
  });

  it.each([
    ["not an object", "plain string"],
    ["an array", []],
    ["missing categories", { sample_ids: [] }],
    ["a non-numeric count", { categories: { H: { tp: "2", fp: 0, fn: 0, tn: 0, f1: null, flagged: false } }, sample_ids: [] }],
    ["a negative count", { categories: { H: { tp: -1, fp: 0, fn: 0, tn: 0, f1: null, flagged: false } }, sample_ids: [] }],
    ["a string f1", { categories: { H: { tp: 1, fp: 0, fn: 0, tn: 0, f1: "0.5", flagged: false } }, sample_ids: [] }],
    ["missing sample ids", { categories: {} }],
    ["non-string sample ids", { categories: {}, sample_ids: [1, 2] }],
    ["non-list disagreements", { categories: {}, sample_ids: [], disagreements: { H: "b" } }],
  ])("rejects %s with a format error", (_name, raw) => {
    expect(() => parseAuditReport(raw)).toThrow(AuditFormatError);
  });
});

describe("empty report", () => {
  it("is detected from an empty sample list", () => {
    const view = parseAuditReport({ categories: {}, sample_ids: [], disagreements: {} });
    expect(isEmptyReport(view)).toBe(true);
    expect(isEmptyReport(parseAuditReport(sampleReport()))).toBe(false);
  });
});

describe("agreement matrix", () => {
  it("marks exactly the disagreeing sample-category cells", () => {
    const rows = agreementMatrix(parseAuditReport(sampleReport()));
    expect(rows.map((r) => r.sampleId)).toEqual(["a", "b", "c"]);
    expect(rows[0].cells["H"]).toBe(true);
    expect(rows[1].cells["H"]).toBe(false);
    expect(rows[2].cells["H"]).toBe(false);
    expect(rows[1].cells["S"]).toBe(true);
  });
});
