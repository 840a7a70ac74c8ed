/** Wire types for the abstraction service. */

export type Stage = 'Block' | 'Regrow' | 'Main' | 'Connector' | 'Offcut'

export interface PrimitiveRecord {
  id: number
  stage: Stage
  parent: number | null
  eps: [number, number]
  scale: [number, number, number]
  rotation_quat: [number, number, number, number]
  rotation_euler_xyz: [number, number, number]
  translation: [number, number, number]
}

export interface AbstractionSnapshot {
  version: number
  normalization: { scale: number; translate: [number, number, number] }
  grid: { resolution: number; tau: number }
  config: Record<string, unknown>
  primitives: PrimitiveRecord[]
}

export interface MeshPayload {
  vertices: [number, number, number][]
  triangles: [number, number, number][]
}

export interface PrimitiveMeshPayload extends MeshPayload {
  id: number
  stage: Stage
}

export interface MetricsPayload {
  cd: number
  emd: number
  voxel_iou: number
  overlap_rate: number | null
  n_primitives: number
  overlap_defined: boolean
  sample_counts: [number, number]
}

export type ColorMode = 'stage' | 'id' | 'overlap'
