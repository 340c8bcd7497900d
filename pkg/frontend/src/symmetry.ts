/**
 * Symmetry filtering of predicted relation sequences: a pair (i, j) is
 * kept only when each edge appears in the other's predicted list, which
 * prunes one-sided hallucinations before the pairs reach the solver.
 */

import type { ConstraintDoc, ConstraintKind } from "./interchange.js";

export function symmetryFilter(
  pred: Map<number, number[]>,
  kind: ConstraintKind,
  provenance = "predicted",
): ConstraintDoc[] {
  const out: ConstraintDoc[] = [];
  const seen = new Set<string>();
  const keys = [...pred.keys()].sort((a, b) => a - b);
  for (const i of keys) {
    for (const j of pred.get(i) ?? []) {
      if (i === j) continue;
      const lo = Math.min(i, j);
      const hi = Math.max(i, j);
      const key = `${lo}-${hi}`;
      if (seen.has(key)) continue;
      if ((pred.get(j) ?? []).includes(i) && (pred.get(i) ?? []).includes(j)) {
        seen.add(key);
        out.push({ kind, entities: [lo, hi], provenance });
      }
    }
  }
  return out;
}
