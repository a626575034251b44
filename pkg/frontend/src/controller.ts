// Maps editor interactions onto service commands. DOM-free on purpose: the
// same entry points serve mouse picking, keyboard stepping and scripted
// tests, and every mutation carries the last seen revision so stale state
// surfaces as a refresh-and-retry prompt instead of silent divergence.

import { ApiClient } from "./api";
import { initialViewState, setActiveLayer, setWidth, Tool, ViewState } from "./state";
import {
  MeshPayload,
  PadResponse,
  SimulateResponse,
  StaleRevisionError,
  TraceResponse,
  ViaResponse,
} from "./types";

export interface FeatureRecord {
  id: string;
  kind: "trace" | "pad" | "via";
  layer: number;
}

export class EditorController {
  state: ViewState = initialViewState();
  features: FeatureRecord[] = [];
  mesh: MeshPayload | null = null;

  constructor(private api: ApiClient) {}

  // -- session -----------------------------------------------------------

  async simulate(nx?: number, ny?: number): Promise<SimulateResponse> {
    const result = await this.guard(() => this.api.simulate(nx, ny, this.state.revision));
    this.state.revision = result.revision;
    await this.refreshMesh();
    return result;
  }

  async refreshMesh(): Promise<MeshPayload> {
    this.mesh = await this.api.mesh();
    this.state.revision = this.mesh.revision;
    this.state.conflict = false;
    return this.mesh;
  }

  // -- tool interactions ---------------------------------------------------

  setTool(tool: Tool): void {
    this.state.tool = tool;
    this.state.pendingPicks = [];
  }

  setLayer(layer: number): void {
    setActiveLayer(this.state, layer);
  }

  setWidthMm(width: number): void {
    setWidth(this.state, width);
  }

  /** A click on a vertex (trace/via tools) or its keyboard equivalent. */
  clickVertex(vertex: number): void {
    if (this.state.tool !== "trace" && this.state.tool !== "via") return;
    this.state.pendingPicks.push(vertex);
    this.state.cursorVertex = vertex;
  }

  /** A click on a quad face while the pad tool is active. */
  clickFace(face: number): void {
    if (this.state.tool !== "pad") return;
    if (!this.state.pendingPicks.includes(face)) this.state.pendingPicks.push(face);
  }

  /** Commit the accumulated vertex picks as one trace on the active layer. */
  async finishTrace(): Promise<TraceResponse> {
    const picks = this.state.pendingPicks;
    if (picks.length < 2) throw new Error("a trace needs at least two picks");
    const result = await this.guard(() =>
      this.api.addTrace(picks, this.state.activeLayer, this.state.widthMm, this.state.revision),
    );
    this.state.pendingPicks = [];
    this.state.revision = result.revision;
    this.features.push({ id: result.id, kind: "trace", layer: result.layer });
    return result;
  }

  async finishPad(exposed: boolean): Promise<PadResponse> {
    const faces = this.state.pendingPicks;
    if (faces.length === 0) throw new Error("a pad needs at least one face");
    const result = await this.guard(() =>
      this.api.addPad(faces, this.state.activeLayer, exposed, this.state.revision),
    );
    this.state.pendingPicks = [];
    this.state.revision = result.revision;
    this.features.push({ id: result.id, kind: "pad", layer: result.layer });
    return result;
  }

  async placeVia(vertex: number, radiusMm: number, fromLayer: number, toLayer: number): Promise<ViaResponse> {
    const result = await this.guard(() =>
      this.api.addVia(vertex, radiusMm, fromLayer, toLayer, this.state.revision),
    );
    this.state.revision = result.revision;
    this.features.push({ id: result.id, kind: "via", layer: fromLayer });
    return result;
  }

  /** Remove the most recently added feature. */
  async undo(): Promise<string | null> {
    const last = this.features.pop();
    if (!last) return null;
    const result = await this.api.deleteFeature(last.id);
    this.state.revision = result.revision;
    return result.deleted;
  }

  check() {
    return this.api.check();
  }

  flatten() {
    return this.api.flatten();
  }

  exportStl() {
    return this.api.exportStl();
  }

  projectJson() {
    return this.api.projectJson();
  }

  /** Stale-revision failures flip the conflict flag for the retry prompt. */
  private async guard<T>(call: () => Promise<T>): Promise<T> {
    try {
      return await call();
    } catch (error) {
      if (error instanceof StaleRevisionError) {
        this.state.conflict = true;
        this.state.banner = "Server state changed; refresh and retry.";
      }
      throw error;
    }
  }
}
