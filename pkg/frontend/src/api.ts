// Typed client for the formcast service. The UI never mutates geometry
// locally: every displayed feature comes back from one of these calls.

import {
  ApiError,
  CheckResponse,
  ExportResponse,
  FlattenResponse,
  MeshPayload,
  PadResponse,
  SimulateResponse,
  StaleRevisionError,
  TraceResponse,
  ViaResponse,
  Violation,
} from "./types";

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const text = await response.text();
    const data = text ? JSON.parse(text) : null;
    if (!response.ok) {
      if (response.status === 409) throw new StaleRevisionError(409, data);
      throw new ApiError(response.status, data);
    }
    return data as T;
  }

  uploadMold(stl: ArrayBuffer): Promise<{ revision: number; triangles: number }> {
    return this.fetchImpl(`${this.baseUrl}/mold`, {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body: stl,
    }).then(async (r) => {
      if (!r.ok) throw new ApiError(r.status, await r.json());
      return r.json();
    });
  }

  simulate(nx?: number, ny?: number, revision?: number): Promise<SimulateResponse> {
    return this.request("POST", "/simulate", { nx, ny, revision });
  }

  mesh(): Promise<MeshPayload> {
    return this.request("GET", "/mesh");
  }

  addTrace(
    picks: number[],
    layer: number,
    widthMm: number,
    revision?: number,
  ): Promise<TraceResponse> {
    return this.request("POST", "/traces", {
      picks,
      layer,
      width_mm: widthMm,
      revision,
    });
  }

  addPad(
    faces: number[],
    layer: number,
    exposed: boolean,
    revision?: number,
  ): Promise<PadResponse> {
    return this.request("POST", "/pads", { faces, layer, exposed, revision });
  }

  addVia(
    vertex: number,
    radiusMm: number,
    fromLayer: number,
    toLayer: number,
    revision?: number,
  ): Promise<ViaResponse> {
    return this.request("POST", "/vias", {
      vertex,
      radius_mm: radiusMm,
      from_layer: fromLayer,
      to_layer: toLayer,
      revision,
    });
  }

  deleteFeature(id: string): Promise<{ revision: number; deleted: string }> {
    return this.request("DELETE", `/feature/${id}`);
  }

  check(): Promise<CheckResponse> {
    return this.request("POST", "/check");
  }

  flatten(): Promise<FlattenResponse> {
    return this.request("GET", "/flatten");
  }

  exportStl(): Promise<ExportResponse> {
    return this.request("POST", "/export");
  }

  projectJson(): Promise<string> {
    return this.fetchImpl(`${this.baseUrl}/project`).then((r) => r.text());
  }
}

export function describeViolation(v: Violation): string {
  return `[${v.kind}] ${v.message}`;
}
