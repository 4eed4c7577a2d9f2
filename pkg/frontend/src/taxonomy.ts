/**
 * Client-side mirror of the server's category set and label normalization,
 * so ternary controls show the vector exactly as the server will store it.
 */

export const CATEGORIES = ["S", "H", "V", "HR", "SH", "S3", "H2", "V2"] as const;

export type Category = (typeof CATEGORIES)[number];

export type Ternary = "positive" | "negative" | "unlabeled";

// Subcategory -> parent. A positive subcategory implies its parent.
export const PARENT: Readonly<Partial<Record<Category, Category>>> = {
  S3: "S",
  H2: "H",
  V2: "V",
};

export type Assignments = Record<Category, Ternary>;

export function emptyAssignments(): Assignments {
  const out = {} as Assignments;
  for (const cat of CATEGORIES) {
    out[cat] = "unlabeled";
  }
  return out;
}

/** Next state for a three-way toggle: unlabeled -> positive -> negative -> unlabeled. */
export function cycle(value: Ternary): Ternary {
  if (value === "unlabeled") return "positive";
  if (value === "positive") return "negative";
  return "unlabeled";
}

/**
 * The server's normalization rules, applied in the same order: a positive
 * subcategory forces its parent positive (overriding an explicit negative),
 * then a negative parent turns unlabeled subcategories negative.
 */
export function promoted(assignments: Assignments): Assignments {
  const out = { ...assignments };
  for (const [sub, parent] of Object.entries(PARENT) as [Category, Category][]) {
    if (out[sub] === "positive" && out[parent] !== "positive") {
      out[parent] = "positive";
    }
  }
  for (const [sub, parent] of Object.entries(PARENT) as [Category, Category][]) {
    if (out[parent] === "negative" && out[sub] === "unlabeled") {
      out[sub] = "negative";
    }
  }
  return out;
}

/** Set one category and re-normalize, returning a fresh object. */
export function withLabel(assignments: Assignments, cat: Category, value: Ternary): Assignments {
  return promoted({ ...assignments, [cat]: value });
}

/** The wire form: only the categories the annotator actually labeled. */
export function labeledEntries(assignments: Assignments): Record<string, Ternary> {
  const out: Record<string, Ternary> = {};
  for (const cat of CATEGORIES) {
    if (assignments[cat] !== "unlabeled") {
      out[cat] = assignments[cat];
    }
  }
  return out;
}

export function hasAnyLabel(assignments: Assignments): boolean {
  return CATEGORIES.some((cat) => assignments[cat] !== "unlabeled");
}
