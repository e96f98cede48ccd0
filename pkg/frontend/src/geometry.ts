// Plane geometry for bounding-ellipse labels. Conventions mirror the
// dataset service: full axis lengths with l1 >= l2 > 0, orientation theta
// in [0, pi) measured from the +x axis, y pointing down (image coords).

export interface EllipseParams {
  cx: number;
  cy: number;
  l1: number;
  l2: number;
  theta: number;
}

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface Point {
  x: number;
  y: number;
}

/** Axes shorter than this (in image pixels) are treated as accidental clicks. */
export const MIN_AXIS_PX = 2;

/** Reduce an angle modulo pi into [0, pi). Same arithmetic as the service. */
export function canonicalizeAngle(theta: number): number {
  if (!Number.isFinite(theta)) {
    throw new Error(`angle must be finite, got ${theta}`);
  }
  let t = theta % Math.PI;
  if (t < 0) t += Math.PI;
  if (t >= Math.PI) t -= Math.PI; // fmod rounding can land exactly on pi
  return t;
}

/**
 * Repair axis order after an edit: if the minor axis was stretched past the
 * major one, swap the two and turn theta by 90 degrees so the stored record
 * always satisfies l1 >= l2.
 */
export function normalizeAxes(e: EllipseParams): EllipseParams {
  if (e.l1 >= e.l2) {
    return { ...e, theta: canonicalizeAngle(e.theta) };
  }
  return {
    cx: e.cx,
    cy: e.cy,
    l1: e.l2,
    l2: e.l1,
    theta: canonicalizeAngle(e.theta + Math.PI / 2),
  };
}

export function isValidEllipse(e: EllipseParams): boolean {
  return (
    Number.isFinite(e.cx) &&
    Number.isFinite(e.cy) &&
    Number.isFinite(e.theta) &&
    e.l1 >= e.l2 &&
    e.l2 > 0
  );
}

export function cloneEllipse(e: EllipseParams): EllipseParams {
  return { cx: e.cx, cy: e.cy, l1: e.l1, l2: e.l2, theta: e.theta };
}

export function dist(ax: number, ay: number, bx: number, by: number): number {
  return Math.hypot(bx - ax, by - ay);
}

/** Distance from point p to the line through `center` with direction theta. */
export function perpDistance(center: Point, theta: number, p: Point): number {
  const dx = p.x - center.x;
  const dy = p.y - center.y;
  return Math.abs(-Math.sin(theta) * dx + Math.cos(theta) * dy);
}

/** Quadratic-form membership test: true when (x, y) lies inside or on e. */
export function pointInEllipse(e: EllipseParams, x: number, y: number): boolean {
  const c = Math.cos(e.theta);
  const s = Math.sin(e.theta);
  const dx = x - e.cx;
  const dy = y - e.cy;
  const u = (c * dx + s * dy) / (e.l1 / 2);
  const v = (-s * dx + c * dy) / (e.l2 / 2);
  return u * u + v * v <= 1;
}

/** Point on the boundary at parameter t (radians around the ellipse). */
export function boundaryPoint(e: EllipseParams, t: number): Point {
  const c = Math.cos(e.theta);
  const s = Math.sin(e.theta);
  const px = (e.l1 / 2) * Math.cos(t);
  const py = (e.l2 / 2) * Math.sin(t);
  return { x: e.cx + c * px - s * py, y: e.cy + s * px + c * py };
}

export function boundaryPoints(e: EllipseParams, n: number): Point[] {
  const pts: Point[] = [];
  for (let i = 0; i < n; i++) {
    pts.push(boundaryPoint(e, (2 * Math.PI * i) / n));
  }
  return pts;
}

/** Tight axis-aligned bounding box of the ellipse (closed-form extents). */
export function ellipseAabb(e: EllipseParams): Box {
  const c = Math.cos(e.theta);
  const s = Math.sin(e.theta);
  const hx = 0.5 * Math.sqrt(e.l1 * e.l1 * c * c + e.l2 * e.l2 * s * s);
  const hy = 0.5 * Math.sqrt(e.l1 * e.l1 * s * s + e.l2 * e.l2 * c * c);
  return { x: e.cx - hx, y: e.cy - hy, w: 2 * hx, h: 2 * hy };
}

export function degrees(radians: number): number {
  return (radians * 180) / Math.PI;
}

export function radians(deg: number): number {
  return (deg * Math.PI) / 180;
}
