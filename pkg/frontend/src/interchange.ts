/**
 * Interchange document types and I/O.
 *
 * The JSON layout mirrors the solver package exactly: camera, vertices,
 * edges (segments and circular arcs), optional faces / ground truth /
 * constraint candidates / predicted depths. Documents written here are
 * consumed by the solver CLI through `detect --method file` and
 * `solve --init predicted`.
 */

import { readFileSync, writeFileSync } from "node:fs";

export interface Camera {
  focal_length: number;
  center_distance: number;
}

export interface ArcParams {
  center: [number, number];
  mid: [number, number];
}

export interface EdgeDoc {
  kind: "segment" | "arc";
  endpoints: [number, number];
  arc?: ArcParams;
}

export type ConstraintKind =
  | "parallel"
  | "perpendicular"
  | "equal_length"
  | "face_planarity"
  | "anchor";

export interface ConstraintDoc {
  kind: ConstraintKind;
  entities: number[];
  provenance: string;
  anchor_value?: number;
}

export interface DrawingDoc {
  camera: Camera;
  vertices: [number, number][];
  edges: EdgeDoc[];
  faces?: number[][];
  gt_depths?: number[];
  constraints?: ConstraintDoc[];
  predicted_depths?: number[];
  solution?: unknown;
}

export function validateDrawing(doc: DrawingDoc): void {
  if (!doc.camera || !(doc.camera.focal_length > 0)) {
    throw new Error("camera with positive focal_length required");
  }
  const m = doc.vertices.length;
  doc.edges.forEach((e, j) => {
    const [a, b] = e.endpoints;
    if (a === b || a < 0 || b < 0 || a >= m || b >= m) {
      throw new Error(`edge ${j}: bad endpoints (${a}, ${b}) for ${m} vertices`);
    }
    if ((e.kind === "arc") !== (e.arc !== undefined)) {
      throw new Error(`edge ${j}: arc parameters must match the kind`);
    }
  });
  for (const field of ["gt_depths", "predicted_depths"] as const) {
    const depths = doc[field];
    if (depths && depths.length !== m) {
      throw new Error(`${field}: length ${depths.length} != vertex count ${m}`);
    }
    if (depths && depths.some((z) => !(z > 0))) {
      throw new Error(`${field}: depths must be positive`);
    }
  }
}

export function loadDrawing(path: string): DrawingDoc {
  const doc = JSON.parse(readFileSync(path, "utf-8")) as DrawingDoc;
  validateDrawing(doc);
  return doc;
}

export function saveDrawing(doc: DrawingDoc, path: string): void {
  validateDrawing(doc);
  writeFileSync(path, JSON.stringify(doc, null, 1) + "\n");
}

/** Edge endpoints with arcs reduced to their chords. */
export function chordEndpoints(doc: DrawingDoc): [number, number][] {
  return doc.edges.map((e) => e.endpoints);
}

/** Ground-truth pairwise relation map: query edge -> sorted related edges. */
export function groundTruthRelations(
  doc: DrawingDoc,
  kind: ConstraintKind,
): Map<number, number[]> {
  const out = new Map<number, number[]>();
  for (let i = 0; i < doc.edges.length; i++) out.set(i, []);
  for (const c of doc.constraints ?? []) {
    if (c.kind !== kind || c.provenance !== "ground_truth") continue;
    const [i, j] = c.entities;
    out.get(i)!.push(j);
    out.get(j)!.push(i);
  }
  for (const related of out.values()) related.sort((a, b) => a - b);
  return out;
}
