/** Linear and logarithmic axis scales with deterministic tick generation. */

export interface Scale {
  kind: "linear" | "log";
  domain: [number, number];
  range: [number, number];
  map(value: number): number;
  ticks(): number[];
}

export function fmt(value: number): string {
  if (value === 0) return "0";
  if (!Number.isFinite(value)) return "NaN";
  const magnitude = Math.abs(value);
  if (magnitude >= 1e-3 && magnitude < 1e5) {
    // trim trailing zeros of a fixed-precision rendering
    return String(Number(value.toPrecision(6)));
  }
  return value.toExponential(2).replace("e+", "e");
}

/** Round positions for the SVG path data (deterministic, compact). */
export function coord(value: number): string {
  return value.toFixed(2);
}

function linearTicks(lo: number, hi: number, count = 6): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = span / Math.max(1, count - 1);
  const power = Math.floor(Math.log10(step0));
  const base = Math.pow(10, power);
  let step = base;
  for (const mult of [1, 2, 2.5, 5, 10]) {
    if (base * mult >= step0) {
      step = base * mult;
      break;
    }
  }
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += step) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}

function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  const eLo = Math.ceil(Math.log10(lo) - 1e-12);
  const eHi = Math.floor(Math.log10(hi) + 1e-12);
  for (let e = eLo; e <= eHi; e++) {
    ticks.push(Math.pow(10, e));
  }
  if (ticks.length === 0) {
    ticks.push(lo, hi);
  }
  return ticks;
}

export function linScale(domain: [number, number], range: [number, number]): Scale {
  let [lo, hi] = domain;
  if (lo === hi) {
    lo -= 1;
    hi += 1;
  }
  const [r0, r1] = range;
  return {
    kind: "linear",
    domain: [lo, hi],
    range,
    map: (v) => r0 + ((v - lo) / (hi - lo)) * (r1 - r0),
    ticks: () => linearTicks(lo, hi),
  };
}

export function logScale(domain: [number, number], range: [number, number]): Scale {
  let [lo, hi] = domain;
  if (!(lo > 0)) lo = 1e-300;
  if (!(hi > lo)) hi = lo * 10;
  const [r0, r1] = range;
  const lLo = Math.log10(lo);
  const lHi = Math.log10(hi);
  return {
    kind: "log",
    domain: [lo, hi],
    range,
    map: (v) => r0 + ((Math.log10(Math.max(v, 1e-300)) - lLo) / (lHi - lLo)) * (r1 - r0),
    ticks: () => logTicks(lo, hi),
  };
}

export function extent(values: number[], positiveOnly = false): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (!Number.isFinite(v)) continue;
    if (positiveOnly && v <= 0) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo === Infinity) {
    return positiveOnly ? [1e-1, 1] : [0, 1];
  }
  if (lo === hi) {
    return positiveOnly ? [lo / 2, hi * 2] : [lo - 1, hi + 1];
  }
  return [lo, hi];
}

export function padLog(domain: [number, number], factor = 1.5): [number, number] {
  return [domain[0] / factor, domain[1] * factor];
}

export function padLinear(domain: [number, number], frac = 0.05): [number, number] {
  const span = domain[1] - domain[0];
  return [domain[0] - frac * span, domain[1] + frac * span];
}
