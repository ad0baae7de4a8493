/**
 * Pure chart geometry. No DOM, no drawing; just payload values mapped to
 * pixel coordinates. Every point keeps the raw server value next to its
 * coordinates so the rendered figure can be checked against the payload
 * verbatim. Nothing here recomputes a statistic.
 */

import type { EstimatePayload } from "./api.js";

export interface Scale {
  domain: [number, number];
  range: [number, number];
  map(value: number): number;
}

export function linearScale(
  domain: [number, number],
  range: [number, number],
): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0;
  return {
    domain,
    range,
    map(value: number): number {
      if (span === 0) return (r0 + r1) / 2;
      return r0 + ((value - d0) / span) * (r1 - r0);
    },
  };
}

export interface CurvePoint {
  step: number;
  minutes: number;
  x: number;
  y: number;
}

export interface BandPoint {
  step: number;
  lower: number;
  median: number;
  upper: number;
  x: number;
  yLower: number;
  yMedian: number;
  yUpper: number;
}

export interface BreakEvenMarker {
  step: number;
  minutes: number | null;
  x: number;
  interval: [number | null, number | null] | null;
  intervalX: [number | null, number | null] | null;
}

export interface RoiChart {
  width: number;
  height: number;
  pad: number;
  x: Scale;
  y: Scale;
  agt: CurvePoint[];
  mgt: CurvePoint[];
  band: BandPoint[] | null;
  observedSteps: number | null;
  breakEven: BreakEvenMarker | null;
  beyondHorizon: boolean;
  beyondHorizonFraction: number | null;
  diagnosticsOk: boolean | null;
  warnings: string[];
}

export interface ChartOptions {
  width?: number;
  height?: number;
  pad?: number;
}

/** Indexes where the band ordering lower <= median <= upper fails.
 * Expected to be empty for any payload the server produces. */
export function bandOrderViolations(band: {
  lower: number[];
  median: number[];
  upper: number[];
}): number[] {
  const bad: number[] = [];
  for (let i = 0; i < band.median.length; i++) {
    if (!(band.lower[i] <= band.median[i] && band.median[i] <= band.upper[i])) {
      bad.push(i);
    }
  }
  return bad;
}

export function buildRoiChart(
  estimate: EstimatePayload,
  options: ChartOptions = {},
): RoiChart {
  const width = options.width ?? 720;
  const height = options.height ?? 360;
  const pad = options.pad ?? 40;

  const agtSteps = estimate.agt_curve.steps;
  const agtMinutes = estimate.agt_curve.minutes;
  const mgtSteps = estimate.mgt_curve.steps;
  const mgtMinutes = estimate.mgt_curve.minutes;
  const bands = estimate.bands;

  let maxStep = 0;
  for (const s of agtSteps) maxStep = Math.max(maxStep, s);
  for (const s of mgtSteps) maxStep = Math.max(maxStep, s);
  if (bands) for (const s of bands.steps) maxStep = Math.max(maxStep, s);

  let maxMinutes = 0;
  for (const v of agtMinutes) maxMinutes = Math.max(maxMinutes, v);
  for (const v of mgtMinutes) maxMinutes = Math.max(maxMinutes, v);
  if (bands) {
    for (const v of bands.upper) {
      if (Number.isFinite(v)) maxMinutes = Math.max(maxMinutes, v);
    }
  }
  if (maxMinutes === 0) maxMinutes = 1;

  const x = linearScale([0, Math.max(maxStep, 1)], [pad, width - pad]);
  const y = linearScale([0, maxMinutes], [height - pad, pad]);

  const toPoints = (steps: number[], minutes: number[]): CurvePoint[] =>
    steps.map((step, i) => ({
      step,
      minutes: minutes[i],
      x: x.map(step),
      y: y.map(minutes[i]),
    }));

  let band: BandPoint[] | null = null;
  if (bands) {
    band = bands.steps.map((step, i) => ({
      step,
      lower: bands.lower[i],
      median: bands.median[i],
      upper: bands.upper[i],
      x: x.map(step),
      yLower: y.map(bands.lower[i]),
      yMedian: y.map(bands.median[i]),
      yUpper: y.map(bands.upper[i]),
    }));
  }

  const roi = estimate.roi;
  let breakEven: BreakEvenMarker | null = null;
  if (roi.break_even_step !== null) {
    const interval = roi.interval ?? null;
    breakEven = {
      step: roi.break_even_step,
      minutes: roi.break_even_minutes,
      x: x.map(roi.break_even_step),
      interval,
      intervalX: interval
        ? [
            interval[0] === null ? null : x.map(interval[0]),
            interval[1] === null ? null : x.map(interval[1]),
          ]
        : null,
    };
  }

  return {
    width,
    height,
    pad,
    x,
    y,
    agt: toPoints(agtSteps, agtMinutes),
    mgt: toPoints(mgtSteps, mgtMinutes),
    band,
    observedSteps: bands ? bands.observed_steps : null,
    breakEven,
    beyondHorizon: roi.beyond_horizon,
    beyondHorizonFraction: roi.beyond_horizon_fraction ?? null,
    diagnosticsOk: estimate.diagnostics_ok ?? null,
    warnings: estimate.warnings ?? [],
  };
}

export interface BarChart {
  width: number;
  height: number;
  pad: number;
  bars: { step: number; minutes: number; x: number; y: number; w: number; h: number }[];
}

/** Per-version maintenance minutes as vertical bars. */
export function buildMaintenanceBars(
  perVersion: [number, number][],
  options: ChartOptions = {},
): BarChart {
  const width = options.width ?? 720;
  const height = options.height ?? 160;
  const pad = options.pad ?? 24;
  const n = perVersion.length;
  let maxMinutes = 0;
  for (const [, m] of perVersion) maxMinutes = Math.max(maxMinutes, m);
  if (maxMinutes === 0) maxMinutes = 1;
  const slot = n > 0 ? (width - 2 * pad) / n : 0;
  const barWidth = Math.max(1, slot * 0.7);
  const y = linearScale([0, maxMinutes], [height - pad, pad]);
  return {
    width,
    height,
    pad,
    bars: perVersion.map(([step, minutes], i) => {
      const top = y.map(minutes);
      return {
        step,
        minutes,
        x: pad + i * slot + (slot - barWidth) / 2,
        y: top,
        w: barWidth,
        h: height - pad - top,
      };
    }),
  };
}

// -- svg path helpers ------------------------------------------------------

const fmt = (v: number): string => String(Math.round(v * 100) / 100);

export function polylinePoints(points: { x: number; y: number }[]): string {
  return points.map((p) => `${fmt(p.x)},${fmt(p.y)}`).join(" ");
}

/** Closed path for the shaded band: upper edge forward, lower edge back. */
export function bandPath(band: BandPoint[]): string {
  if (band.length === 0) return "";
  const parts: string[] = [];
  band.forEach((p, i) => {
    parts.push(`${i === 0 ? "M" : "L"}${fmt(p.x)} ${fmt(p.yUpper)}`);
  });
  for (let i = band.length - 1; i >= 0; i--) {
    const p = band[i];
    parts.push(`L${fmt(p.x)} ${fmt(p.yLower)}`);
  }
  parts.push("Z");
  return parts.join(" ");
}
