// Canvas drawing and view transforms. The overlay is drawn from the exact
// analytic parameters (center, half axes, theta) mapped through the view,
// so it tracks the true boundary at any zoom — no polyline approximation.

import type { Box, EllipseParams, Point } from "./geometry.js";
import { pointInEllipse } from "./geometry.js";
import type { AnnObject, DragMode } from "./state.js";
import type { GesturePreview } from "./gesture.js";

/** Uniform image-to-canvas transform: canvas = image * scale + (ox, oy). */
export interface View {
  scale: number;
  ox: number;
  oy: number;
}

export const MIN_SCALE = 0.05;
export const MAX_SCALE = 64;

export function imageToCanvas(v: View, x: number, y: number): Point {
  return { x: x * v.scale + v.ox, y: y * v.scale + v.oy };
}

export function canvasToImage(v: View, x: number, y: number): Point {
  return { x: (x - v.ox) / v.scale, y: (y - v.oy) / v.scale };
}

/** Fit the image into the canvas, centered, preserving aspect ratio. */
export function fitView(
  imgW: number,
  imgH: number,
  canvasW: number,
  canvasH: number,
): View {
  const scale = Math.min(canvasW / imgW, canvasH / imgH);
  return {
    scale,
    ox: (canvasW - imgW * scale) / 2,
    oy: (canvasH - imgH * scale) / 2,
  };
}

/** Zoom by `factor` keeping the image point under (canvasX, canvasY) fixed. */
export function zoomAt(
  v: View,
  canvasX: number,
  canvasY: number,
  factor: number,
): View {
  const scale = Math.min(MAX_SCALE, Math.max(MIN_SCALE, v.scale * factor));
  const k = scale / v.scale;
  return {
    scale,
    ox: canvasX - (canvasX - v.ox) * k,
    oy: canvasY - (canvasY - v.oy) * k,
  };
}

export function panBy(v: View, dx: number, dy: number): View {
  return { scale: v.scale, ox: v.ox + dx, oy: v.oy + dy };
}

/** Canvas-space arguments for ctx.ellipse reproducing the analytic shape. */
export function ellipseCanvasParams(
  e: EllipseParams,
  v: View,
): { cx: number; cy: number; rx: number; ry: number; rot: number } {
  const c = imageToCanvas(v, e.cx, e.cy);
  return {
    cx: c.x,
    cy: c.y,
    rx: (e.l1 / 2) * v.scale,
    ry: (e.l2 / 2) * v.scale,
    rot: e.theta,
  };
}

export interface HandlePoints {
  center: Point;
  majorA: Point;
  majorB: Point;
  minorA: Point;
  minorB: Point;
  rotate: Point;
}

/** Handle anchor points in canvas space for the selected object. */
export function handlePositions(e: EllipseParams, v: View): HandlePoints {
  const c = Math.cos(e.theta);
  const s = Math.sin(e.theta);
  const a = e.l1 / 2;
  const b = e.l2 / 2;
  const at = (dx: number, dy: number) => imageToCanvas(v, e.cx + dx, e.cy + dy);
  return {
    center: at(0, 0),
    majorA: at(a * c, a * s),
    majorB: at(-a * c, -a * s),
    minorA: at(-b * s, b * c),
    minorB: at(b * s, -b * c),
    rotate: at(1.3 * a * c, 1.3 * a * s),
  };
}

export const HANDLE_RADIUS = 6;

/** Which drag a pointer-down at (x, y) in canvas space starts, if any. */
export function hitHandle(
  e: EllipseParams,
  v: View,
  x: number,
  y: number,
  radius: number = HANDLE_RADIUS + 2,
): Exclude<DragMode, "place-center"> | null {
  const h = handlePositions(e, v);
  const near = (p: Point) => Math.hypot(p.x - x, p.y - y) <= radius;
  if (near(h.rotate)) return "rotate";
  if (near(h.majorA) || near(h.majorB)) return "stretch-major-axis";
  if (near(h.minorA) || near(h.minorB)) return "stretch-minor-axis";
  if (near(h.center)) return "move";
  return null;
}

/** Topmost object containing the image-space point, or null. */
export function hitObject(objects: AnnObject[], x: number, y: number): number | null {
  for (let i = objects.length - 1; i >= 0; i--) {
    if (pointInEllipse(objects[i]!.ellipse, x, y)) return i;
  }
  return null;
}

const CLASS_COLORS = ["#4fc3f7", "#ffb74d", "#aed581", "#f06292", "#ba68c8", "#fff176"];

export function classColor(classes: string[], klass: string): string {
  const i = Math.max(0, classes.indexOf(klass));
  return CLASS_COLORS[i % CLASS_COLORS.length]!;
}

export interface SceneOptions {
  showBoxes: boolean;
}

/**
 * Draw image, overlays, selection handles, and the in-progress gesture
 * ghost. `ctx` is a plain 2D context; callers clear and scale for DPR.
 */
export function drawScene(
  ctx: CanvasRenderingContext2D,
  view: View,
  image: CanvasImageSource | null,
  state: {
    objects: AnnObject[];
    selected: number | null;
    classes: string[];
    width: number;
    height: number;
  },
  gesture: GesturePreview | null,
  opts: SceneOptions = { showBoxes: true },
): void {
  if (image) {
    ctx.save();
    ctx.imageSmoothingEnabled = view.scale < 4;
    ctx.translate(view.ox, view.oy);
    ctx.scale(view.scale, view.scale);
    ctx.drawImage(image, 0, 0);
    ctx.restore();
  } else {
    const o = imageToCanvas(view, 0, 0);
    ctx.strokeStyle = "#555";
    ctx.strokeRect(o.x, o.y, state.width * view.scale, state.height * view.scale);
  }

  state.objects.forEach((obj, i) => {
    const color = classColor(state.classes, obj.klass);
    const p = ellipseCanvasParams(obj.ellipse, view);
    ctx.beginPath();
    ctx.ellipse(p.cx, p.cy, p.rx, p.ry, p.rot, 0, 2 * Math.PI);
    ctx.lineWidth = i === state.selected ? 2.5 : 1.5;
    ctx.strokeStyle = color;
    ctx.stroke();

    if (opts.showBoxes && obj.box) {
      const tl = imageToCanvas(view, obj.box.x, obj.box.y);
      ctx.setLineDash(obj.boxUserDrawn ? [] : [4, 4]);
      ctx.lineWidth = 1;
      ctx.strokeStyle = color;
      ctx.strokeRect(tl.x, tl.y, obj.box.w * view.scale, obj.box.h * view.scale);
      ctx.setLineDash([]);
    }

    const c = imageToCanvas(view, obj.ellipse.cx, obj.ellipse.cy);
    ctx.fillStyle = color;
    ctx.font = "12px sans-serif";
    ctx.fillText(`${i}:${obj.klass}`, c.x + 4, c.y - 4);
  });

  if (state.selected !== null) {
    const obj = state.objects[state.selected];
    if (obj) drawHandles(ctx, obj.ellipse, view);
  }

  if (gesture) drawGhost(ctx, gesture, view);
}

function drawHandles(
  ctx: CanvasRenderingContext2D,
  e: EllipseParams,
  view: View,
): void {
  const h = handlePositions(e, view);
  ctx.strokeStyle = "#ffffff";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(h.majorA.x, h.majorA.y);
  ctx.lineTo(h.rotate.x, h.rotate.y);
  ctx.stroke();
  for (const [p, filled] of [
    [h.center, true],
    [h.majorA, true],
    [h.majorB, true],
    [h.minorA, false],
    [h.minorB, false],
  ] as [Point, boolean][]) {
    ctx.beginPath();
    ctx.arc(p.x, p.y, HANDLE_RADIUS, 0, 2 * Math.PI);
    ctx.fillStyle = filled ? "#ffffff" : "#222222";
    ctx.fill();
    ctx.stroke();
  }
  ctx.beginPath();
  ctx.arc(h.rotate.x, h.rotate.y, HANDLE_RADIUS, 0, 2 * Math.PI);
  ctx.fillStyle = "#ffd54f";
  ctx.fill();
  ctx.stroke();
}

function drawGhost(
  ctx: CanvasRenderingContext2D,
  g: GesturePreview,
  view: View,
): void {
  const c = imageToCanvas(view, g.center.x, g.center.y);
  ctx.strokeStyle = "#ffffff";
  ctx.setLineDash([5, 5]);
  ctx.lineWidth = 1;

  if (g.phase === "major" && g.halfMajor > 0) {
    const dx = g.halfMajor * Math.cos(g.theta) * view.scale;
    const dy = g.halfMajor * Math.sin(g.theta) * view.scale;
    ctx.beginPath();
    ctx.moveTo(c.x - dx, c.y - dy);
    ctx.lineTo(c.x + dx, c.y + dy);
    ctx.stroke();
  } else if (g.phase === "minor" && g.halfMinor > 0) {
    ctx.beginPath();
    ctx.ellipse(
      c.x,
      c.y,
      g.halfMajor * view.scale,
      g.halfMinor * view.scale,
      g.theta,
      0,
      2 * Math.PI,
    );
    ctx.stroke();
  }
  ctx.setLineDash([]);

  ctx.beginPath();
  ctx.arc(c.x, c.y, 3, 0, 2 * Math.PI);
  ctx.fillStyle = "#ffffff";
  ctx.fill();
}

/** Rubber-band rectangle for box-drawing mode (canvas space corners). */
export function drawBoxGhost(
  ctx: CanvasRenderingContext2D,
  a: Point,
  b: Point,
): void {
  ctx.setLineDash([5, 5]);
  ctx.strokeStyle = "#ffffff";
  ctx.lineWidth = 1;
  ctx.strokeRect(
    Math.min(a.x, b.x),
    Math.min(a.y, b.y),
    Math.abs(b.x - a.x),
    Math.abs(b.y - a.y),
  );
  ctx.setLineDash([]);
}

/** Normalize two image-space corners into a box; null when degenerate. */
export function boxFromCorners(a: Point, b: Point): Box | null {
  const w = Math.abs(b.x - a.x);
  const h = Math.abs(b.y - a.y);
  if (w < 1 || h < 1) return null;
  return { x: Math.min(a.x, b.x), y: Math.min(a.y, b.y), w, h };
}
