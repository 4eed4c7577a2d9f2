/**
 * Parsing and display helpers for the audit report: per-category F-1 with
 * undefined rendered as "n/a" (never 0), plus a per-sample agreement matrix
 * with disagreements highlighted.
 */

import { CATEGORIES } from "./taxonomy.js";

export interface CategoryAuditView {
  tp: number;
  fp: number;
  fn: number;
  tn: number;
  f1: number | null;
  flagged: boolean;
}

export interface AuditReportView {
  categories: Record<string, CategoryAuditView>;
  sampleIds: string[];
  disagreements: Record<string, string[]>;
}

export class AuditFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "AuditFormatError";
  }
}

function asCount(value: unknown, field: string): number {
  if (typeof value !== "number" || !Number.isInteger(value) || value < 0) {
    throw new AuditFormatError(`field ${field} must be a non-negative integer`);
  }
  return value;
}

export function parseAuditReport(raw: unknown): AuditReportView {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new AuditFormatError("audit report must be a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  const categoriesRaw = obj["categories"];
  if (typeof categoriesRaw !== "object" || categoriesRaw === null || Array.isArray(categoriesRaw)) {
    throw new AuditFormatError("audit report lacks a categories object");
  }
  const categories: Record<string, CategoryAuditView> = {};
  for (const [name, entryRaw] of Object.entries(categoriesRaw as Record<string, unknown>)) {
    if (typeof entryRaw !== "object" || entryRaw === null) {
      throw new AuditFormatError(`category ${name} entry must be an object`);
    }
    const entry = entryRaw as Record<string, unknown>;
    const f1 = entry["f1"];
    if (f1 !== null && typeof f1 !== "number") {
      throw new AuditFormatError(`category ${name} f1 must be a number or null`);
    }
    categories[name] = {
      tp: asCount(entry["tp"], `${name}.tp`),
      fp: asCount(entry["fp"], `${name}.fp`),
      fn: asCount(entry["fn"], `${name}.fn`),
      tn: asCount(entry["tn"], `${name}.tn`),
      f1: f1 === null ? null : (f1 as number),
      flagged: Boolean(entry["flagged"]),
    };
  }
  const sampleIdsRaw = obj["sample_ids"];
  if (!Array.isArray(sampleIdsRaw) || sampleIdsRaw.some((v) => typeof v !== "string")) {
    throw new AuditFormatError("audit report lacks a sample_ids list");
  }
  const disagreementsRaw = obj["disagreements"] ?? {};
  if (typeof disagreementsRaw !== "object" || disagreementsRaw === null || Array.isArray(disagreementsRaw)) {
    throw new AuditFormatError("disagreements must be an object");
  }
  const disagreements: Record<string, string[]> = {};
  for (const [name, idsRaw] of Object.entries(disagreementsRaw as Record<string, unknown>)) {
    if (!Array.isArray(idsRaw) || idsRaw.some((v) => typeof v !== "string")) {
      throw new AuditFormatError(`disagreements for ${name} must be a list of ids`);
    }
    disagreements[name] = idsRaw as string[];
  }
  return { categories, sampleIds: sampleIdsRaw as string[], disagreements };
}

/** Undefined F-1 renders as "n/a"; it is never conflated with a zero score. */
export function formatF1(f1: number | null): string {
  if (f1 === null) {
    return "n/a";
  }
  return f1.toFixed(3);
}

export function isEmptyReport(view: AuditReportView): boolean {
  return view.sampleIds.length === 0;
}

export interface AgreementRow {
  sampleId: string;
  /** Per category: true when annotator and auditor agreed on this sample. */
  cells: Record<string, boolean>;
}

/** One row per audited sample; a false cell is a highlighted disagreement. */
export function agreementMatrix(view: AuditReportView): AgreementRow[] {
  return view.sampleIds.map((sampleId) => {
    const cells: Record<string, boolean> = {};
    for (const cat of CATEGORIES) {
      cells[cat] = !(view.disagreements[cat] ?? []).includes(sampleId);
    }
    return { sampleId, cells };
  });
}
