/**
 * Edge point sampling and binary rasterization.
 *
 * Edge tokens are built from a fixed count of points sampled uniformly
 * along each edge and sorted lexicographically (x first, then y), so the
 * embedding is independent of edge orientation. The rasterizer draws
 * 1-pixel Bresenham strokes into a 256x256 bitmap whose viewport covers
 * the projected bounding box with a 5% margin; no anti-aliasing, fully
 * deterministic.
 */

import type { DrawingDoc, EdgeDoc } from "./interchange.js";

export const EDGE_POINT_COUNT = 8;
export const RASTER_SIZE = 256;

type Pt = [number, number];

function lexicographic(a: Pt, b: Pt): number {
  return a[0] !== b[0] ? a[0] - b[0] : a[1] - b[1];
}

/** Circle through three points; falls back to the segment midpoint
 * parameterization when they are almost collinear. */
function circumcircle(a: Pt, m: Pt, b: Pt): { c: Pt; r: number } | null {
  const d = 2 * (a[0] * (m[1] - b[1]) + m[0] * (b[1] - a[1]) + b[0] * (a[1] - m[1]));
  if (Math.abs(d) < 1e-12) return null;
  const a2 = a[0] * a[0] + a[1] * a[1];
  const m2 = m[0] * m[0] + m[1] * m[1];
  const b2 = b[0] * b[0] + b[1] * b[1];
  const ux = (a2 * (m[1] - b[1]) + m2 * (b[1] - a[1]) + b2 * (a[1] - m[1])) / d;
  const uy = (a2 * (b[0] - m[0]) + m2 * (a[0] - b[0]) + b2 * (m[0] - a[0])) / d;
  const r = Math.hypot(a[0] - ux, a[1] - uy);
  return { c: [ux, uy], r };
}

/** Points along an edge (arc-aware), endpoints included. */
export function edgePolyline(doc: DrawingDoc, edge: EdgeDoc, count: number): Pt[] {
  const a = doc.vertices[edge.endpoints[0]];
  const b = doc.vertices[edge.endpoints[1]];
  if (edge.kind === "segment" || !edge.arc) {
    const pts: Pt[] = [];
    for (let k = 0; k < count; k++) {
      const t = count === 1 ? 0 : k / (count - 1);
      pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    return pts;
  }
  const mid = edge.arc.mid;
  const circle = circumcircle(a, mid, b);
  if (!circle) {
    return edgePolyline(doc, { ...edge, kind: "segment", arc: undefined }, count);
  }
  const angle = (p: Pt) => Math.atan2(p[1] - circle.c[1], p[0] - circle.c[0]);
  let ta = angle(a);
  let tm = angle(mid);
  let tb = angle(b);
  // unwrap so the sweep from ta to tb passes through tm
  const wrap = (t: number) => ((t % (2 * Math.PI)) + 2 * Math.PI) % (2 * Math.PI);
  tm = ta + signedDelta(ta, tm);
  tb = tm + signedDelta(wrap(tm), wrap(tb));

  function signedDelta(from: number, to: number): number {
    let d = wrap(to) - wrap(from);
    if (d > Math.PI) d -= 2 * Math.PI;
    if (d < -Math.PI) d += 2 * Math.PI;
    return d;
  }

  const pts: Pt[] = [];
  for (let k = 0; k < count; k++) {
    const t = count === 1 ? 0 : k / (count - 1);
    const theta = ta + t * (tb - ta);
    pts.push([
      circle.c[0] + circle.r * Math.cos(theta),
      circle.c[1] + circle.r * Math.sin(theta),
    ]);
  }
  return pts;
}

/** Fixed-count lexicographically ordered sample points for one edge. */
export function sampleEdgePoints(doc: DrawingDoc, edge: EdgeDoc): Pt[] {
  const pts = edgePolyline(doc, edge, EDGE_POINT_COUNT);
  pts.sort(lexicographic);
  return pts;
}

export interface Viewport {
  minX: number;
  minY: number;
  scale: number; // world units per pixel
}

export function drawingViewport(doc: DrawingDoc, size = RASTER_SIZE): Viewport {
  const xs = doc.vertices.map((v) => v[0]);
  const ys = doc.vertices.map((v) => v[1]);
  if (xs.length === 0) throw new Error("empty drawing");
  let minX = Math.min(...xs);
  let maxX = Math.max(...xs);
  let minY = Math.min(...ys);
  let maxY = Math.max(...ys);
  const span = Math.max(maxX - minX, maxY - minY, 1e-9);
  const margin = 0.05 * span;
  minX -= margin;
  minY -= margin;
  const scale = (span + 2 * margin) / (size - 1);
  return { minX, minY, scale };
}

function toPixel(p: Pt, vp: Viewport): [number, number] {
  return [Math.round((p[0] - vp.minX) / vp.scale), Math.round((p[1] - vp.minY) / vp.scale)];
}

/** Bresenham line; returns the number of pixels newly set. */
export function strokeLine(
  img: Float32Array,
  size: number,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): number {
  const dx = Math.abs(x1 - x0);
  const dy = Math.abs(y1 - y0);
  const sx = x0 < x1 ? 1 : -1;
  const sy = y0 < y1 ? 1 : -1;
  let err = dx - dy;
  let set = 0;
  let x = x0;
  let y = y0;
  for (;;) {
    if (x >= 0 && x < size && y >= 0 && y < size) {
      const idx = y * size + x;
      if (img[idx] === 0) {
        img[idx] = 1;
        set++;
      }
    }
    if (x === x1 && y === y1) break;
    const e2 = 2 * err;
    if (e2 > -dy) {
      err -= dy;
      x += sx;
    }
    if (e2 < dx) {
      err += dx;
      y += sy;
    }
  }
  return set;
}

/** 256x256 binary image of the drawing (row-major, y down). */
export function rasterize(doc: DrawingDoc, size = RASTER_SIZE): Float32Array {
  if (doc.vertices.length === 0 || doc.edges.length === 0) {
    throw new Error("cannot rasterize an empty drawing");
  }
  const vp = drawingViewport(doc, size);
  const img = new Float32Array(size * size);
  for (const edge of doc.edges) {
    const poly = edge.kind === "arc" ? edgePolyline(doc, edge, 48) : edgePolyline(doc, edge, 2);
    for (let k = 0; k + 1 < poly.length; k++) {
      const [x0, y0] = toPixel(poly[k], vp);
      const [x1, y1] = toPixel(poly[k + 1], vp);
      strokeLine(img, size, x0, y0, x1, y1);
    }
  }
  return img;
}

/** Per-vertex pixel coordinates normalized to [0, 1] for embeddings. */
export function vertexPixelCoords(doc: DrawingDoc, size = RASTER_SIZE): Pt[] {
  const vp = drawingViewport(doc, size);
  return doc.vertices.map((v) => {
    const [px, py] = toPixel(v, vp);
    return [px / (size - 1), py / (size - 1)];
  });
}
