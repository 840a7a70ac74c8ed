import type { AbstractionSnapshot, PrimitiveRecord } from '../src/types.js'

export function primitive(
  id: number,
  parent: number | null = null,
): PrimitiveRecord {
  return {
    id,
    stage: 'Main',
    parent,
    eps: [1, 1],
    scale: [0.3, 0.3, 0.3],
    rotation_quat: [1, 0, 0, 0],
    rotation_euler_xyz: [0, 0, 0],
    translation: [0, 0, 0],
  }
}

export function snapshot(...ids: number[]): AbstractionSnapshot {
  return {
    version: 1,
    normalization: { scale: 1, translate: [0, 0, 0] },
    grid: { resolution: 32, tau: 0.0625 },
    config: {},
    primitives: ids.map((id) => primitive(id)),
  }
}
