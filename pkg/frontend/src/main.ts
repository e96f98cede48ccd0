// DOM bootstrap: wires the gesture machine, editor state, renderer, and
// API client to the canvas and toolbar. Keyboard-first: digits pick the
// class, n/p step images, u undoes, s saves, e/b switch draw modes.

import { ApiClient } from "./api.js";
import type { ImageInfo } from "./api.js";
import { degrees, radians } from "./geometry.js";
import type { Point } from "./geometry.js";
import { EllipseGesture } from "./gesture.js";
import {
  boxFromCorners,
  canvasToImage,
  drawBoxGhost,
  drawScene,
  fitView,
  hitHandle,
  hitObject,
  panBy,
  zoomAt,
} from "./render.js";
import type { View } from "./render.js";
import { EditorSession, EditorState } from "./state.js";

type Drag =
  | { kind: "gesture" }
  | { kind: "pan"; last: Point }
  | { kind: "box"; start: Point; cursor: Point }
  | { kind: "move"; last: Point }
  | { kind: "stretch-major-axis" }
  | { kind: "stretch-minor-axis" }
  | { kind: "rotate" };

const api = new ApiClient();
const state = new EditorState();
const session = new EditorSession(api, state);
const gesture = new EllipseGesture();

const canvas = document.getElementById("canvas") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const wrap = document.getElementById("canvas-wrap")!;
const statusEl = document.getElementById("status")!;
const retryBtn = document.getElementById("retry") as HTMLButtonElement;
const imageLabel = document.getElementById("image-label")!;
const classButtons = document.getElementById("class-buttons")!;

let images: ImageInfo[] = [];
let imageIndex = -1;
let bitmap: HTMLImageElement | null = null;
let view: View = { scale: 1, ox: 0, oy: 0 };
let autoFit = true;
let drag: Drag | null = null;
let drawMode: "ellipse" | "box" = "ellipse";
let spaceHeld = false;
let statusTimer: number | undefined;

function setStatus(text: string, transient = false): void {
  statusEl.textContent = text;
  window.clearTimeout(statusTimer);
  if (transient) {
    statusTimer = window.setTimeout(() => {
      statusEl.textContent = state.isDirty() ? "unsaved changes" : "";
    }, 2500);
  }
}

function resizeCanvas(): void {
  const dpr = window.devicePixelRatio || 1;
  const w = wrap.clientWidth;
  const h = wrap.clientHeight;
  canvas.width = Math.max(1, Math.round(w * dpr));
  canvas.height = Math.max(1, Math.round(h * dpr));
  canvas.style.width = `${w}px`;
  canvas.style.height = `${h}px`;
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  if (autoFit && state.width > 0) {
    view = fitView(state.width, state.height, w, h);
  }
}

function draw(): void {
  const dpr = window.devicePixelRatio || 1;
  ctx.save();
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.fillStyle = "#111418";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.restore();
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  drawScene(ctx, view, bitmap, state, gesture.preview());
  if (drag?.kind === "box") {
    drawBoxGhost(ctx, imageToCanvasPoint(drag.start), imageToCanvasPoint(drag.cursor));
  }
}

function imageToCanvasPoint(p: Point): Point {
  return { x: p.x * view.scale + view.ox, y: p.y * view.scale + view.oy };
}

function sync(): void {
  draw();
  refreshInspector();
  refreshClassButtons();
  if (!statusTimer) {
    statusEl.textContent = state.isDirty() ? "unsaved changes" : "";
  }
}

// --- toolbar ------------------------------------------------------------

function refreshClassButtons(): void {
  classButtons.querySelectorAll("button").forEach((b, i) => {
    b.classList.toggle("active", state.classes[i] === state.activeClass);
  });
}

function buildClassButtons(): void {
  classButtons.textContent = "";
  state.classes.forEach((klass, i) => {
    const b = document.createElement("button");
    b.textContent = `${i + 1} ${klass}`;
    b.addEventListener("click", () => {
      state.setClassByHotkey(i + 1);
      sync();
    });
    classButtons.appendChild(b);
  });
}

function setDrawMode(mode: "ellipse" | "box"): void {
  drawMode = mode;
  gesture.cancel();
  document.getElementById("mode-ellipse")!.classList.toggle("active", mode === "ellipse");
  document.getElementById("mode-box")!.classList.toggle("active", mode === "box");
  draw();
}

async function doSave(): Promise<void> {
  retryBtn.hidden = true;
  const outcome = await session.save();
  switch (outcome.kind) {
    case "clean":
      setStatus("no changes to save", true);
      break;
    case "saved":
      setStatus(`saved ${outcome.objects} object(s)`, true);
      break;
    case "invalid":
      if (outcome.objectIndex !== null) {
        state.selected = outcome.objectIndex;
      }
      setStatus(`rejected: ${outcome.detail}`);
      break;
    case "network":
      setStatus(`save failed: ${outcome.message} — edits kept`);
      retryBtn.hidden = false;
      break;
  }
  sync();
}

async function loadImage(index: number): Promise<void> {
  const info = images[index];
  if (!info) return;
  if (state.isDirty() && !window.confirm("Unsaved changes — discard them?")) {
    return;
  }
  imageIndex = index;
  gesture.cancel();
  await session.load(info.image_id);
  imageLabel.textContent = `${info.image_id} (${index + 1}/${images.length})`;
  bitmap = await loadBitmap(api.imageUrl(info.image_id));
  autoFit = true;
  resizeCanvas();
  setStatus("");
  sync();
}

function loadBitmap(url: string): Promise<HTMLImageElement | null> {
  return new Promise((resolve) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => resolve(null);
    img.src = url;
  });
}

// --- inspector ----------------------------------------------------------

const insp = {
  panel: document.getElementById("insp-fields")!,
  empty: document.getElementById("insp-empty")!,
  klass: document.getElementById("insp-class") as HTMLSelectElement,
  cx: document.getElementById("insp-cx") as HTMLInputElement,
  cy: document.getElementById("insp-cy") as HTMLInputElement,
  l1: document.getElementById("insp-l1") as HTMLInputElement,
  l2: document.getElementById("insp-l2") as HTMLInputElement,
  theta: document.getElementById("insp-theta") as HTMLInputElement,
  box: document.getElementById("insp-box")!,
};

function refreshInspector(): void {
  const obj = state.selectedObject;
  insp.panel.hidden = obj === null;
  insp.empty.hidden = obj !== null;
  if (!obj) return;
  if (insp.klass.options.length !== state.classes.length) {
    insp.klass.textContent = "";
    for (const k of state.classes) {
      insp.klass.appendChild(new Option(k, k));
    }
  }
  insp.klass.value = obj.klass;
  insp.cx.value = obj.ellipse.cx.toFixed(2);
  insp.cy.value = obj.ellipse.cy.toFixed(2);
  insp.l1.value = obj.ellipse.l1.toFixed(2);
  insp.l2.value = obj.ellipse.l2.toFixed(2);
  // shown in degrees for humans; the record stores radians
  insp.theta.value = degrees(obj.ellipse.theta).toFixed(1);
  insp.box.textContent = obj.box
    ? `${obj.boxUserDrawn ? "drawn" : "auto"} ` +
      `[${obj.box.x.toFixed(1)}, ${obj.box.y.toFixed(1)}, ` +
      `${obj.box.w.toFixed(1)}, ${obj.box.h.toFixed(1)}]`
    : "none";
}

function bindInspector(): void {
  const geomField = (
    el: HTMLInputElement,
    apply: (value: number) => Partial<Parameters<typeof state.updateSelectedEllipse>[0]>,
  ) => {
    el.addEventListener("change", () => {
      const value = Number(el.value);
      if (!Number.isFinite(value)) return;
      state.beginEdit();
      if (!state.updateSelectedEllipse(apply(value))) {
        state.undo();
        setStatus("invalid value", true);
      }
      sync();
    });
  };
  geomField(insp.cx, (v) => ({ cx: v }));
  geomField(insp.cy, (v) => ({ cy: v }));
  geomField(insp.l1, (v) => ({ l1: v }));
  geomField(insp.l2, (v) => ({ l2: v }));
  geomField(insp.theta, (v) => ({ theta: radians(v) }));
  insp.klass.addEventListener("change", () => {
    state.setSelectedClass(insp.klass.value);
    sync();
  });
  document.getElementById("insp-fill-box")!.addEventListener("click", () => {
    if (state.fillBoxFromEllipse()) sync();
  });
  document.getElementById("insp-delete")!.addEventListener("click", () => {
    if (state.deleteSelected()) sync();
  });
}

// --- pointer interaction --------------------------------------------------

function onPointerDown(ev: PointerEvent): void {
  canvas.setPointerCapture(ev.pointerId);
  const { offsetX: x, offsetY: y } = ev;
  if (spaceHeld || ev.button === 1) {
    drag = { kind: "pan", last: { x, y } };
    return;
  }
  if (ev.button !== 0) return;
  const ip = canvasToImage(view, x, y);

  if (drawMode === "box") {
    if (state.selected === null) {
      setStatus("select an object first — the box attaches to it", true);
      return;
    }
    state.beginEdit();
    drag = { kind: "box", start: ip, cursor: ip };
    return;
  }

  const sel = state.selectedObject;
  if (sel) {
    const handle = hitHandle(sel.ellipse, view, x, y);
    if (handle) {
      state.beginEdit();
      drag = handle === "move" ? { kind: "move", last: ip } : { kind: handle };
      return;
    }
  }
  const hit = hitObject(state.objects, ip.x, ip.y);
  if (hit !== null) {
    state.selected = hit;
    state.beginEdit();
    drag = { kind: "move", last: ip };
    sync();
    return;
  }
  state.selected = null;
  gesture.begin(ip.x, ip.y);
  drag = { kind: "gesture" };
  sync();
}

function onPointerMove(ev: PointerEvent): void {
  const { offsetX: x, offsetY: y } = ev;
  const ip = canvasToImage(view, x, y);
  if (!drag) {
    if (gesture.active) {
      gesture.move(ip.x, ip.y);
      draw();
    }
    return;
  }
  switch (drag.kind) {
    case "pan":
      view = panBy(view, x - drag.last.x, y - drag.last.y);
      autoFit = false;
      drag.last = { x, y };
      break;
    case "gesture":
      gesture.move(ip.x, ip.y);
      break;
    case "box":
      drag.cursor = ip;
      break;
    case "move":
      state.moveSelectedBy(ip.x - drag.last.x, ip.y - drag.last.y);
      drag.last = ip;
      break;
    case "stretch-major-axis": {
      const e = state.selectedObject?.ellipse;
      if (e) {
        const half = Math.hypot(ip.x - e.cx, ip.y - e.cy);
        state.updateSelectedEllipse({
          l1: 2 * half,
          theta: Math.atan2(ip.y - e.cy, ip.x - e.cx),
        });
      }
      break;
    }
    case "stretch-minor-axis": {
      const e = state.selectedObject?.ellipse;
      if (e) {
        const c = Math.cos(e.theta);
        const s = Math.sin(e.theta);
        const half = Math.abs(-s * (ip.x - e.cx) + c * (ip.y - e.cy));
        state.updateSelectedEllipse({ l2: 2 * half });
      }
      break;
    }
    case "rotate": {
      const e = state.selectedObject?.ellipse;
      if (e) {
        state.updateSelectedEllipse({
          theta: Math.atan2(ip.y - e.cy, ip.x - e.cx),
        });
      }
      break;
    }
  }
  draw();
  refreshInspector();
}

function onPointerUp(ev: PointerEvent): void {
  const ip = canvasToImage(view, ev.offsetX, ev.offsetY);
  if (!drag) {
    // second phase of the draw gesture runs without a held button
    if (gesture.active) finishGesturePhase(ip);
    return;
  }
  const d = drag;
  drag = null;
  switch (d.kind) {
    case "gesture":
      finishGesturePhase(ip);
      break;
    case "box": {
      const box = boxFromCorners(d.start, ip);
      if (box && state.setSelectedBox(box)) {
        setStatus("box attached", true);
      } else {
        state.undo(); // drop the beginEdit snapshot for a degenerate box
        setStatus("box too small — discarded", true);
      }
      break;
    }
    default:
      break; // move/stretch/rotate drags already applied
  }
  sync();
}

function finishGesturePhase(ip: Point): void {
  const result = gesture.release(ip.x, ip.y);
  if (result.kind === "done") {
    state.addObject(result.ellipse);
    setStatus(`added ${state.activeClass}`, true);
  } else if (result.kind === "rejected") {
    setStatus(`discarded: ${result.reason}`, true);
  } else {
    drag = { kind: "gesture" }; // minor phase continues under the next press
  }
  sync();
}

function onWheel(ev: WheelEvent): void {
  ev.preventDefault();
  view = zoomAt(view, ev.offsetX, ev.offsetY, Math.pow(1.0015, -ev.deltaY));
  autoFit = false;
  draw();
}

// --- keyboard -------------------------------------------------------------

function onKeyDown(ev: KeyboardEvent): void {
  const target = ev.target as HTMLElement | null;
  if (target && (target.tagName === "INPUT" || target.tagName === "SELECT")) {
    return;
  }
  if (ev.key === " ") {
    spaceHeld = true;
    ev.preventDefault();
    return;
  }
  if (ev.key === "Escape") {
    if (gesture.active) {
      gesture.cancel();
      drag = null;
      setStatus("gesture cancelled", true);
    } else {
      state.selected = null;
    }
    sync();
    return;
  }
  if ((ev.ctrlKey || ev.metaKey) && ev.key.toLowerCase() === "z") {
    ev.preventDefault();
    if (state.undo()) sync();
    return;
  }
  if ((ev.ctrlKey || ev.metaKey) && ev.key.toLowerCase() === "s") {
    ev.preventDefault();
    void doSave();
    return;
  }
  if (ev.key >= "1" && ev.key <= "9") {
    if (state.setClassByHotkey(Number(ev.key))) sync();
    return;
  }
  switch (ev.key.toLowerCase()) {
    case "u":
      if (state.undo()) sync();
      break;
    case "s":
      void doSave();
      break;
    case "n":
      void loadImage(imageIndex + 1);
      break;
    case "p":
      void loadImage(imageIndex - 1);
      break;
    case "e":
      setDrawMode("ellipse");
      break;
    case "b":
      setDrawMode("box");
      break;
    case "f":
      if (state.fillBoxFromEllipse()) sync();
      break;
    case "delete":
    case "backspace":
      if (state.deleteSelected()) sync();
      break;
  }
}

// --- boot -------------------------------------------------------------------

async function boot(): Promise<void> {
  bindInspector();
  document.getElementById("prev")!.addEventListener("click", () => void loadImage(imageIndex - 1));
  document.getElementById("next")!.addEventListener("click", () => void loadImage(imageIndex + 1));
  document.getElementById("undo")!.addEventListener("click", () => {
    if (state.undo()) sync();
  });
  document.getElementById("save")!.addEventListener("click", () => void doSave());
  retryBtn.addEventListener("click", () => void doSave());
  document.getElementById("mode-ellipse")!.addEventListener("click", () => setDrawMode("ellipse"));
  document.getElementById("mode-box")!.addEventListener("click", () => setDrawMode("box"));

  canvas.addEventListener("pointerdown", onPointerDown);
  canvas.addEventListener("pointermove", onPointerMove);
  canvas.addEventListener("pointerup", onPointerUp);
  canvas.addEventListener("wheel", onWheel, { passive: false });
  window.addEventListener("keydown", onKeyDown);
  window.addEventListener("keyup", (ev) => {
    if (ev.key === " ") spaceHeld = false;
  });
  new ResizeObserver(() => {
    resizeCanvas();
    draw();
  }).observe(wrap);

  try {
    const [classes, imgs] = await Promise.all([api.fetchClasses(), api.listImages()]);
    state.classes = classes;
    state.activeClass = classes[0] ?? state.activeClass;
    images = imgs;
  } catch (err) {
    setStatus(`cannot reach the annotation service: ${String(err)}`);
    return;
  }
  buildClassButtons();
  setDrawMode("ellipse");
  if (images.length === 0) {
    setStatus("service has no images");
    return;
  }
  const wanted = new URLSearchParams(location.search).get("image");
  const start = Math.max(0, images.findIndex((i) => i.image_id === wanted));
  await loadImage(start);
}

void boot();
