// Color assignment is pure and stable: the same layer id always maps to the
// same color, across sessions, so saved designs re-open looking identical.

const GOLDEN_ANGLE = 137.50776405003785;

export function layerHue(layer: number): number {
  return (30 + layer * GOLDEN_ANGLE) % 360;
}

export function layerColor(layer: number): string {
  return `hsl(${layerHue(layer).toFixed(3)}, 75%, 52%)`;
}

export function layerColorRgb(layer: number): [number, number, number] {
  return hslToRgb(layerHue(layer) / 360, 0.75, 0.52);
}

/** Normalized position of a stretch value inside [min, max]; monotone. */
export function stretchT(value: number, min: number, max: number): number {
  if (!(max > min)) return 0.5;
  const t = (value - min) / (max - min);
  return Math.min(1, Math.max(0, t));
}

/**
 * Heatmap ramp: cool blue for unstretched faces through warm red for the
 * most stretched. Strictly monotone in t per channel, so color order always
 * matches stretch order.
 */
export function stretchColor(t: number): [number, number, number] {
  const clamped = Math.min(1, Math.max(0, t));
  return [
    0.15 + 0.85 * clamped,
    0.2 + 0.25 * (1 - Math.abs(2 * clamped - 1)),
    0.95 - 0.85 * clamped,
  ];
}

export function faceHeatmapColors(faceStretch: number[]): [number, number, number][] {
  const min = Math.min(...faceStretch);
  const max = Math.max(...faceStretch);
  return faceStretch.map((v) => stretchColor(stretchT(v, min, max)));
}

function hslToRgb(h: number, s: number, l: number): [number, number, number] {
  const q = l < 0.5 ? l * (1 + s) : l + s - l * s;
  const p = 2 * l - q;
  const channel = (t: number) => {
    let x = t;
    if (x < 0) x += 1;
    if (x > 1) x -= 1;
    if (x < 1 / 6) return p + (q - p) * 6 * x;
    if (x < 1 / 2) return q;
    if (x < 2 / 3) return p + (q - p) * (2 / 3 - x) * 6;
    return p;
  };
  return [channel(h + 1 / 3), channel(h), channel(h - 1 / 3)];
}
