// End-to-end flows against a faithful in-memory service: the scripted
// draw/save/reload round trip, dirty-flag save gating, 422 surfacing,
// and network-failure recovery.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { EllipseGesture } from "../src/gesture.js";
import { EditorSession } from "../src/state.js";
import { FakeService } from "./fakeservice.js";

let svc: FakeService;
let api: ApiClient;

beforeEach(() => {
  svc = new FakeService([
    { image_id: "lot_0001", width: 256, height: 256 },
    { image_id: "lot_0002", width: 640, height: 480 },
  ]);
  vi.stubGlobal("fetch", svc.handler());
  api = new ApiClient();
});

afterEach(() => {
  vi.unstubAllGlobals();
});

/** The documented scripted gesture: center, major tip at +30x, minor 10 px. */
function drawScriptedEllipse(session: EditorSession): void {
  const g = new EllipseGesture();
  g.begin(100, 100);
  g.move(130, 100);
  expect(g.release(130, 100)).toEqual({ kind: "pending" });
  g.move(115, 110);
  const result = g.release(115, 110);
  expect(result.kind).toBe("done");
  if (result.kind === "done") {
    session.state.addObject(result.ellipse);
  }
}

describe("scripted draw / save / reload round trip", () => {
  it("recovers Ellipse(100, 100, 60, 20, 0) within 1e-6", async () => {
    const session = new EditorSession(api);
    await session.load("lot_0001");
    expect(session.state.isDirty()).toBe(false);

    drawScriptedEllipse(session);
    expect(session.state.isDirty()).toBe(true);

    const outcome = await session.save();
    expect(outcome).toEqual({ kind: "saved", objects: 1 });
    expect(svc.puts).toBe(1);
    expect(session.state.isDirty()).toBe(false);

    // reload as a brand-new page would
    const fresh = new EditorSession(new ApiClient());
    await fresh.load("lot_0001");
    expect(fresh.state.objects).toHaveLength(1);
    const e = fresh.state.objects[0]!.ellipse;
    expect(Math.abs(e.cx - 100)).toBeLessThan(1e-6);
    expect(Math.abs(e.cy - 100)).toBeLessThan(1e-6);
    expect(Math.abs(e.l1 - 60)).toBeLessThan(1e-6);
    expect(Math.abs(e.l2 - 20)).toBeLessThan(1e-6);
    expect(Math.abs(e.theta - 0)).toBeLessThan(1e-6);
    expect(fresh.state.objects[0]!.klass).toBe("car");
  });

  it("round-trips every float bit-exactly through the wire format", async () => {
    const session = new EditorSession(api);
    await session.load("lot_0002");
    const g = new EllipseGesture();
    g.begin(123.456, 78.9);
    g.release(140.25, 91.125);
    const r = g.release(118, 95.5);
    expect(r.kind).toBe("done");
    const drawn = r.kind === "done" ? r.ellipse : null;
    session.state.addObject(drawn!);
    session.state.fillBoxFromEllipse();
    await session.save();

    const fresh = new EditorSession(new ApiClient());
    await fresh.load("lot_0002");
    const back = fresh.state.objects[0]!;
    expect(back.ellipse).toEqual(drawn); // exact doubles, not approximately
    expect(back.box).not.toBeNull();
    expect(back.boxUserDrawn).toBe(false);
  });
});

describe("save gating", () => {
  it("a clean document issues no network call", async () => {
    const session = new EditorSession(api);
    await session.load("lot_0001");
    drawScriptedEllipse(session);
    await session.save();
    expect(svc.puts).toBe(1);

    expect(await session.save()).toEqual({ kind: "clean" });
    expect(svc.puts).toBe(1); // still one PUT

    // editing and undoing back to the saved shape is also clean
    session.state.selected = 0;
    session.state.beginEdit();
    session.state.moveSelectedBy(5, 5);
    session.state.undo();
    expect(await session.save()).toEqual({ kind: "clean" });
    expect(svc.puts).toBe(1);
  });
});

describe("server rejection", () => {
  it("surfaces the failing object from a 422 and keeps the document", async () => {
    const session = new EditorSession(api);
    await session.load("lot_0001");
    drawScriptedEllipse(session);
    // simulate the one legal way the UI can produce a rejected record:
    // the service's class set changed under the session
    session.state.objects[0]!.klass = "tram";

    const outcome = await session.save();
    expect(outcome.kind).toBe("invalid");
    if (outcome.kind !== "invalid") return;
    expect(outcome.detail).toContain("object 0");
    expect(outcome.detail).toContain("tram");
    expect(outcome.objectIndex).toBe(0);
    expect(session.state.objects).toHaveLength(1); // nothing thrown away
    expect(session.state.isDirty()).toBe(true);
  });
});

describe("network failure", () => {
  it("keeps the edits and succeeds on retry", async () => {
    const session = new EditorSession(api);
    await session.load("lot_0001");
    drawScriptedEllipse(session);

    svc.failNextPut = true;
    const failed = await session.save();
    expect(failed.kind).toBe("network");
    expect(session.state.isDirty()).toBe(true);
    expect(session.state.objects).toHaveLength(1);

    const retried = await session.save();
    expect(retried).toEqual({ kind: "saved", objects: 1 });
    expect(svc.stored.has("lot_0001")).toBe(true);
  });
});

describe("api client", () => {
  it("lists images and classes", async () => {
    expect(await api.listImages()).toHaveLength(2);
    expect(await api.fetchClasses()).toEqual(["car", "bus", "truck"]);
  });

  it("serves an empty record for an unlabeled image", async () => {
    const rec = await api.fetchLabels("lot_0002");
    expect(rec).toEqual({
      v: 1,
      image_id: "lot_0002",
      width: 640,
      height: 480,
      objects: [],
    });
  });

  it("raises ApiError with the server detail on 404", async () => {
    await expect(api.fetchLabels("nope")).rejects.toThrowError(ApiError);
    await expect(api.fetchLabels("nope")).rejects.toMatchObject({
      status: 404,
      detail: "unknown image id 'nope'",
    });
  });

  it("escapes image ids in urls", () => {
    expect(api.imageUrl("a b")).toBe("/api/images/a%20b");
  });
});
