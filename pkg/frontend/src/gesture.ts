// Three-phase ellipse drawing gesture, in image coordinates:
//
//   1. pointer down   -> fixes the center
//   2. drag + release -> fixes the major axis endpoint (l1 and theta)
//   3. drag + release -> fixes the minor half-width (l2)
//
// Escape cancels at any point. Either axis landing under MIN_AXIS_PX
// discards the whole gesture — those are accidental clicks, not objects.

import type { EllipseParams, Point } from "./geometry.js";
import {
  MIN_AXIS_PX,
  canonicalizeAngle,
  dist,
  perpDistance,
} from "./geometry.js";

export type GesturePhase = "idle" | "major" | "minor";

export type GestureResult =
  | { kind: "pending" }
  | { kind: "done"; ellipse: EllipseParams }
  | { kind: "rejected"; reason: string };

export interface GesturePreview {
  phase: GesturePhase;
  center: Point;
  theta: number;
  halfMajor: number;
  halfMinor: number;
}

export class EllipseGesture {
  private phaseNow: GesturePhase = "idle";
  private center: Point = { x: 0, y: 0 };
  private cursor: Point = { x: 0, y: 0 };
  private theta = 0;
  private halfMajor = 0;

  get phase(): GesturePhase {
    return this.phaseNow;
  }

  get active(): boolean {
    return this.phaseNow !== "idle";
  }

  /** Pointer down on empty canvas: place the center, start the major drag. */
  begin(x: number, y: number): void {
    this.center = { x, y };
    this.cursor = { x, y };
    this.theta = 0;
    this.halfMajor = 0;
    this.phaseNow = "major";
  }

  move(x: number, y: number): void {
    if (this.phaseNow === "idle") return;
    this.cursor = { x, y };
  }

  /** Pointer up: commit the current phase. */
  release(x: number, y: number): GestureResult {
    if (this.phaseNow === "idle") {
      return { kind: "rejected", reason: "no gesture in progress" };
    }
    this.cursor = { x, y };

    if (this.phaseNow === "major") {
      const half = dist(this.center.x, this.center.y, x, y);
      if (2 * half < MIN_AXIS_PX) {
        this.cancel();
        return { kind: "rejected", reason: "major axis under 2 px" };
      }
      this.halfMajor = half;
      this.theta = canonicalizeAngle(Math.atan2(y - this.center.y, x - this.center.x));
      this.phaseNow = "minor";
      return { kind: "pending" };
    }

    // minor half-width is the cursor's distance from the major-axis line,
    // capped so the gesture can never invert the axis order
    const half = Math.min(this.minorHalfWidth(x, y), this.halfMajor);
    if (2 * half < MIN_AXIS_PX) {
      this.cancel();
      return { kind: "rejected", reason: "minor axis under 2 px" };
    }
    const ellipse: EllipseParams = {
      cx: this.center.x,
      cy: this.center.y,
      l1: 2 * this.halfMajor,
      l2: 2 * half,
      theta: this.theta,
    };
    this.cancel();
    return { kind: "done", ellipse };
  }

  cancel(): void {
    this.phaseNow = "idle";
    this.halfMajor = 0;
    this.theta = 0;
  }

  /** Geometry for drawing the in-progress ghost, or null when idle. */
  preview(): GesturePreview | null {
    if (this.phaseNow === "idle") return null;
    if (this.phaseNow === "major") {
      const half = dist(this.center.x, this.center.y, this.cursor.x, this.cursor.y);
      const theta =
        half > 0
          ? canonicalizeAngle(
              Math.atan2(this.cursor.y - this.center.y, this.cursor.x - this.center.x),
            )
          : 0;
      return {
        phase: "major",
        center: { ...this.center },
        theta,
        halfMajor: half,
        halfMinor: 0,
      };
    }
    return {
      phase: "minor",
      center: { ...this.center },
      theta: this.theta,
      halfMajor: this.halfMajor,
      halfMinor: Math.min(
        this.minorHalfWidth(this.cursor.x, this.cursor.y),
        this.halfMajor,
      ),
    };
  }

  private minorHalfWidth(x: number, y: number): number {
    return perpDistance(this.center, this.theta, { x, y });
  }
}
