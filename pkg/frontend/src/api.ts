// HTTP client for the lyric service. One in-flight generation at a
// time: starting a new one aborts the previous (cancel-and-replace).

import type {
  GenerateRequest,
  GenerateResponse,
  HealthResponse,
  ThemesResponse,
} from "./types.js";
import { isFieldErrorList } from "./types.js";

export type FetchFn = (
  url: string,
  init?: RequestInit
) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  fields: { field: string; message: string }[];

  constructor(status: number, message: string, fields: { field: string; message: string }[] = []) {
    super(message);
    this.status = status;
    this.fields = fields;
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let detail: unknown;
  try {
    detail = (await res.json()).detail;
  } catch {
    detail = null;
  }
  if (isFieldErrorList(detail)) {
    const msg = detail
      .map((d) => (d.field ? `${d.field}: ${d.message}` : d.message))
      .join("; ");
    throw new ApiError(res.status, msg, detail);
  }
  if (typeof detail === "string") {
    throw new ApiError(res.status, detail);
  }
  throw new ApiError(res.status, `HTTP ${res.status}`);
}

export class LyricApi {
  private base: string;
  private fetchFn: FetchFn;
  private inflight: AbortController | null = null;

  constructor(base = "", fetchFn: FetchFn = (u, i) => fetch(u, i)) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  async generate(req: GenerateRequest): Promise<GenerateResponse> {
    if (this.inflight) {
      this.inflight.abort();
    }
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const res = await this.fetchFn(`${this.base}/generate`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(req),
        signal: controller.signal,
      });
      await raiseForStatus(res);
      return (await res.json()) as GenerateResponse;
    } finally {
      if (this.inflight === controller) {
        this.inflight = null;
      }
    }
  }

  async themes(): Promise<ThemesResponse> {
    const res = await this.fetchFn(`${this.base}/themes`);
    await raiseForStatus(res);
    return (await res.json()) as ThemesResponse;
  }

  async health(): Promise<HealthResponse> {
    const res = await this.fetchFn(`${this.base}/health`);
    await raiseForStatus(res);
    return (await res.json()) as HealthResponse;
  }
}

export function isAbort(err: unknown): boolean {
  return err instanceof DOMException && err.name === "AbortError";
}
