// Editor view state: what tool is active, where, and what the last server
// revision was. The UI is a pure view plus command shell over the service;
// this object holds everything the view needs that is not server state.

export type Tool = "trace" | "pad" | "via" | "inspect";

export const MIN_TRACE_WIDTH_MM = 1.5;
export const MAX_TRACE_WIDTH_MM = 10.0;

export interface ViewState {
  tool: Tool;
  activeLayer: number;
  layerCount: number;
  widthMm: number;
  showStretchHeatmap: boolean;
  showFlatPreview: boolean;
  showViolations: boolean;
  revision: number;
  pendingPicks: number[]; // vertex picks (trace) or face picks (pad)
  cursorVertex: number; // keyboard-driven pick cursor
  conflict: boolean; // true after a 409: refresh-and-retry prompt
  banner: string | null;
}

export function initialViewState(): ViewState {
  return {
    tool: "trace",
    activeLayer: 0,
    layerCount: 2,
    widthMm: MIN_TRACE_WIDTH_MM,
    showStretchHeatmap: false,
    showFlatPreview: false,
    showViolations: false,
    revision: 0,
    pendingPicks: [],
    cursorVertex: 0,
    conflict: false,
    banner: null,
  };
}

export function setWidth(state: ViewState, widthMm: number): void {
  state.widthMm = Math.min(MAX_TRACE_WIDTH_MM, Math.max(MIN_TRACE_WIDTH_MM, widthMm));
}

export function setActiveLayer(state: ViewState, layer: number): void {
  if (layer < 0 || layer >= state.layerCount) {
    throw new RangeError(`layer ${layer} outside 0..${state.layerCount - 1}`);
  }
  state.activeLayer = layer;
}

/** Move the keyboard pick cursor by one grid step; clamps at the sheet rim. */
export function stepCursor(
  state: ViewState,
  nx: number,
  ny: number,
  di: number,
  dj: number,
): number {
  const i = state.cursorVertex % nx;
  const j = Math.floor(state.cursorVertex / nx);
  const ni = Math.min(nx - 1, Math.max(0, i + di));
  const nj = Math.min(ny - 1, Math.max(0, j + dj));
  state.cursorVertex = nj * nx + ni;
  return state.cursorVertex;
}
