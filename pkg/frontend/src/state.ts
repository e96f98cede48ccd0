// Editor document model: the object list mirroring the stored label record,
// selection, undo history, and the dirty flag that gates network saves.

import type { Box, EllipseParams } from "./geometry.js";
import { cloneEllipse, ellipseAabb, isValidEllipse, normalizeAxes } from "./geometry.js";
import type { WireObject, WireRecord } from "./api.js";
import { ApiClient, ApiError } from "./api.js";

/** What the pointer is currently doing to the selected object. */
export type DragMode =
  | "place-center"
  | "stretch-major-axis"
  | "stretch-minor-axis"
  | "rotate"
  | "move";

export interface AnnObject {
  klass: string;
  ellipse: EllipseParams;
  box: Box | null;
  boxUserDrawn: boolean;
  peak: number;
}

interface Snapshot {
  objects: AnnObject[];
  selected: number | null;
}

const UNDO_LIMIT = 200;

export function fromWireObject(o: WireObject): AnnObject {
  return {
    klass: o.class,
    ellipse: { ...o.ellipse },
    box: o.box ? { ...o.box } : null,
    boxUserDrawn: o.box_user_drawn ?? false,
    peak: o.peak ?? 1.0,
  };
}

export function toWireObject(o: AnnObject): WireObject {
  const wire: WireObject = { class: o.klass, ellipse: { ...o.ellipse } };
  if (o.box) {
    wire.box = { ...o.box };
    wire.box_user_drawn = o.boxUserDrawn;
  }
  if (o.peak !== 1.0) {
    wire.peak = o.peak;
  }
  return wire;
}

function cloneObject(o: AnnObject): AnnObject {
  return {
    klass: o.klass,
    ellipse: cloneEllipse(o.ellipse),
    box: o.box ? { ...o.box } : null,
    boxUserDrawn: o.boxUserDrawn,
    peak: o.peak,
  };
}

export class EditorState {
  imageId = "";
  width = 0;
  height = 0;
  objects: AnnObject[] = [];
  selected: number | null = null;
  classes: string[] = ["car", "bus", "truck"];
  activeClass = "car";

  private undoStack: Snapshot[] = [];
  private baseline = "[]";

  /** Replace the whole document with a freshly fetched record. */
  loadRecord(rec: WireRecord, classes?: string[]): void {
    this.imageId = rec.image_id;
    this.width = rec.width;
    this.height = rec.height;
    this.objects = rec.objects.map(fromWireObject);
    this.selected = null;
    this.undoStack = [];
    if (classes && classes.length > 0) {
      this.classes = [...classes];
      if (!this.classes.includes(this.activeClass)) {
        this.activeClass = this.classes[0]!;
      }
    }
    this.baseline = this.serializeObjects();
  }

  toWireRecord(): WireRecord {
    return {
      v: 1,
      image_id: this.imageId,
      width: this.width,
      height: this.height,
      objects: this.objects.map(toWireObject),
    };
  }

  /** True when the document differs from what was last loaded or saved. */
  isDirty(): boolean {
    return this.serializeObjects() !== this.baseline;
  }

  markSaved(): void {
    this.baseline = this.serializeObjects();
  }

  /**
   * Record the current document for undo. Call once before a discrete edit
   * or at the start of a drag, so a whole drag undoes as one step.
   */
  beginEdit(): void {
    this.undoStack.push(this.snapshot());
    if (this.undoStack.length > UNDO_LIMIT) {
      this.undoStack.shift();
    }
  }

  undo(): boolean {
    const snap = this.undoStack.pop();
    if (!snap) return false;
    this.objects = snap.objects;
    this.selected = snap.selected;
    return true;
  }

  get selectedObject(): AnnObject | null {
    return this.selected === null ? null : (this.objects[this.selected] ?? null);
  }

  /** Append a gesture result with the active class. Returns its index. */
  addObject(e: EllipseParams): number {
    this.beginEdit();
    this.objects.push({
      klass: this.activeClass,
      ellipse: normalizeAxes(e),
      box: null,
      boxUserDrawn: false,
      peak: 1.0,
    });
    this.selected = this.objects.length - 1;
    return this.selected;
  }

  deleteSelected(): boolean {
    if (this.selected === null) return false;
    this.beginEdit();
    this.objects.splice(this.selected, 1);
    this.selected = null;
    return true;
  }

  /**
   * Apply a partial geometry edit to the selected object. Axis order is
   * repaired (swap + 90 degrees) and theta canonicalized, so the document
   * always satisfies l1 >= l2 > 0; invalid values are rejected.
   */
  updateSelectedEllipse(patch: Partial<EllipseParams>): boolean {
    const obj = this.selectedObject;
    if (!obj) return false;
    const merged = normalizeAxes({ ...obj.ellipse, ...patch });
    if (!isValidEllipse(merged)) return false;
    obj.ellipse = merged;
    return true;
  }

  moveSelectedBy(dx: number, dy: number): boolean {
    const obj = this.selectedObject;
    if (!obj) return false;
    return this.updateSelectedEllipse({
      cx: obj.ellipse.cx + dx,
      cy: obj.ellipse.cy + dy,
    });
  }

  setSelectedClass(klass: string): boolean {
    const obj = this.selectedObject;
    if (!obj || !this.classes.includes(klass) || obj.klass === klass) return false;
    this.beginEdit();
    obj.klass = klass;
    return true;
  }

  /** 1-based class hotkey: sets the active class and retags the selection. */
  setClassByHotkey(digit: number): boolean {
    const klass = this.classes[digit - 1];
    if (klass === undefined) return false;
    this.activeClass = klass;
    this.setSelectedClass(klass);
    return true;
  }

  /** Attach a hand-drawn box to the selected object. */
  setSelectedBox(box: Box): boolean {
    const obj = this.selectedObject;
    if (!obj || !(box.w > 0) || !(box.h > 0)) return false;
    this.beginEdit();
    obj.box = { ...box };
    obj.boxUserDrawn = true;
    return true;
  }

  /** Auto-fill the box field from the ellipse's tight bounding box. */
  fillBoxFromEllipse(): boolean {
    const obj = this.selectedObject;
    if (!obj) return false;
    this.beginEdit();
    obj.box = ellipseAabb(obj.ellipse);
    obj.boxUserDrawn = false;
    return true;
  }

  private snapshot(): Snapshot {
    return { objects: this.objects.map(cloneObject), selected: this.selected };
  }

  private serializeObjects(): string {
    return JSON.stringify(this.objects.map(toWireObject));
  }
}

export type SaveOutcome =
  | { kind: "clean" }
  | { kind: "saved"; objects: number }
  | { kind: "invalid"; detail: string; objectIndex: number | null }
  | { kind: "network"; message: string };

/** Pull the failing object index out of a service 422 detail, if present. */
export function failingObjectIndex(detail: string): number | null {
  const m = /^object (\d+)/.exec(detail);
  return m ? Number(m[1]) : null;
}

/** Ties the document to the service: load by image id, save when dirty. */
export class EditorSession {
  readonly state: EditorState;

  constructor(
    private readonly api: ApiClient,
    state?: EditorState,
  ) {
    this.state = state ?? new EditorState();
  }

  async load(imageId: string, classes?: string[]): Promise<void> {
    const rec = await this.api.fetchLabels(imageId);
    this.state.loadRecord(rec, classes);
  }

  /**
   * PUT the record if anything changed. A clean document issues no network
   * call at all; failures leave the document untouched so a retry can
   * simply call save() again.
   */
  async save(): Promise<SaveOutcome> {
    if (!this.state.isDirty()) {
      return { kind: "clean" };
    }
    try {
      const reply = await this.api.saveLabels(this.state.toWireRecord());
      this.state.markSaved();
      return { kind: "saved", objects: reply.objects };
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        return {
          kind: "invalid",
          detail: err.detail,
          objectIndex: failingObjectIndex(err.detail),
        };
      }
      const message = err instanceof Error ? err.message : String(err);
      return { kind: "network", message };
    }
  }
}
