import type { Stage } from './types.js'

/** Legend mapping: every pipeline stage has a fixed, distinguishable color. */
export const STAGE_COLORS: Record<Stage, number> = {
  Block: 0x8888aa,
  Regrow: 0x4477cc,
  Main: 0x44aa66,
  Connector: 0xddaa33,
  Offcut: 0xcc5544,
}

/** Deterministic per-id color with well-spread hues (golden-angle walk). */
export function idColor(id: number): number {
  const hue = (id * 137.508) % 360
  return hslToRgbInt(hue / 360, 0.6, 0.55)
}

/** Shade from single coverage (grey) to heavy multi-coverage (red). */
export function overlapColor(coverage: number): number {
  const t = Math.min(Math.max(coverage - 1, 0), 1)
  const r = Math.round(0x99 + t * (0xff - 0x99))
  const gb = Math.round(0x99 * (1 - t))
  return (r << 16) | (gb << 8) | gb
}

function hslToRgbInt(h: number, s: number, l: number): number {
  const f = (n: number) => {
    const k = (n + h * 12) % 12
    const a = s * Math.min(l, 1 - l)
    return l - a * Math.max(-1, Math.min(k - 3, 9 - k, 1))
  }
  const to255 = (v: number) => Math.round(v * 255)
  return (to255(f(0)) << 16) | (to255(f(8)) << 8) | to255(f(4))
}
