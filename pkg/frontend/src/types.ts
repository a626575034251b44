// Payload shapes of the formcast service API (all lengths in millimeters).

export interface MeshPayload {
  revision: number;
  nx: number;
  ny: number;
  width_mm: number;
  height_mm: number;
  positions: number[]; // flat xyz triples, formed configuration
  rest_positions: number[]; // flat xy pairs, flat configuration
  vertex_state: number[]; // 0 free, 1 clamped edge, 2 adhered to mold
  quads: number[]; // flat quadruples of vertex indices
  face_stretch: number[]; // per-quad formed/rest area ratio
  edge_stretch_summary: { min: number; max: number; mean: number };
}

export interface StageLogEntry {
  stage: string;
  iterations: number;
  residual: number;
  converged: boolean;
  adhered: number;
  bed_pinned: number;
}

export interface SimulateResponse {
  revision: number;
  stage_log: StageLogEntry[];
  ok: boolean;
}

export interface TraceResponse {
  revision: number;
  id: string;
  path: number[];
  layer: number;
}

export interface PadResponse {
  revision: number;
  id: string;
  faces: number[];
  layer: number;
}

export interface ViaResponse {
  revision: number;
  id: string;
}

export interface Violation {
  kind: string;
  subjects: string[];
  measure_mm: number;
  message: string;
}

export interface CheckResponse {
  revision: number;
  violations: Violation[];
  clean: boolean;
}

export interface PolygonRings {
  exterior: number[][];
  holes: number[][][];
}

export interface FlatFeaturePayload {
  id: string;
  kind: "trace" | "pad";
  layer: number;
  exposed: boolean;
  polygons: PolygonRings[];
}

export interface FlatViaPayload {
  id: string;
  center: number[];
  radius_mm: number;
  from_layer: number;
  to_layer: number;
}

export interface FlattenResponse {
  revision: number;
  layout: {
    sheet_width_mm: number;
    sheet_height_mm: number;
    margin_mm: number;
    layer_count: number;
    features: FlatFeaturePayload[];
    vias: FlatViaPayload[];
  };
}

export interface ExportFile {
  material: string;
  filename: string;
  bytes: number;
  stl_b64: string;
}

export interface ExportResponse {
  revision: number;
  files: ExportFile[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: unknown,
  ) {
    super(`service responded ${status}`);
  }
}

export class StaleRevisionError extends ApiError {}
