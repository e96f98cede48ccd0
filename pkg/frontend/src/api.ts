// Typed client for the annotation service. The wire dialect is the
// label-record JSON the service persists; this module never reshapes it.

export interface WireEllipse {
  cx: number;
  cy: number;
  l1: number;
  l2: number;
  theta: number;
}

export interface WireBox {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface WireObject {
  class: string;
  ellipse: WireEllipse;
  box?: WireBox;
  box_user_drawn?: boolean;
  peak?: number;
}

export interface WireRecord {
  v: number;
  image_id: string;
  width: number;
  height: number;
  objects: WireObject[];
}

export interface ImageInfo {
  image_id: string;
  width: number;
  height: number;
}

export interface SaveReply {
  saved: boolean;
  image_id: string;
  objects: number;
}

/** Non-2xx reply from the service; `detail` is the server's message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  imageUrl(imageId: string): string {
    return `${this.base}/api/images/${encodeURIComponent(imageId)}`;
  }

  async listImages(): Promise<ImageInfo[]> {
    const doc = await this.request("GET", "/api/images");
    return (doc as { images: ImageInfo[] }).images;
  }

  async fetchClasses(): Promise<string[]> {
    const doc = await this.request("GET", "/api/classes");
    return (doc as { classes: string[] }).classes;
  }

  async fetchLabels(imageId: string): Promise<WireRecord> {
    const doc = await this.request(
      "GET",
      `/api/labels/${encodeURIComponent(imageId)}`,
    );
    return doc as WireRecord;
  }

  async saveLabels(record: WireRecord): Promise<SaveReply> {
    const doc = await this.request(
      "PUT",
      `/api/labels/${encodeURIComponent(record.image_id)}`,
      JSON.stringify(record),
    );
    return doc as SaveReply;
  }

  private async request(
    method: string,
    path: string,
    body?: string,
  ): Promise<unknown> {
    const resp = await fetch(`${this.base}${path}`, {
      method,
      body,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
    });
    const text = await resp.text();
    if (!resp.ok) {
      throw new ApiError(resp.status, extractDetail(text));
    }
    return JSON.parse(text);
  }
}

function extractDetail(text: string): string {
  try {
    const doc = JSON.parse(text);
    if (doc && typeof doc === "object" && typeof doc.detail === "string") {
      return doc.detail;
    }
  } catch {
    // fall through to the raw body
  }
  return text;
}
