import * as THREE from 'three'

import { STAGE_COLORS, idColor } from './colors.js'
import type { ColorMode, MeshPayload, PrimitiveMeshPayload } from './types.js'

export const PRIMITIVE_ID = 'primitiveId'

function geometryFrom(payload: MeshPayload): THREE.BufferGeometry {
  const geometry = new THREE.BufferGeometry()
  geometry.setAttribute(
    'position',
    new THREE.Float32BufferAttribute(payload.vertices.flat(), 3),
  )
  geometry.setIndex(payload.triangles.flat())
  geometry.computeVertexNormals()
  return geometry
}

export function primitiveColor(
  payload: PrimitiveMeshPayload,
  mode: ColorMode,
): number {
  if (mode === 'id') return idColor(payload.id)
  // overlap shading is applied per voxel sample on top of the stage base
  return STAGE_COLORS[payload.stage]
}

/** One pickable mesh per primitive; the id rides along in userData. */
export function buildPrimitiveMesh(
  payload: PrimitiveMeshPayload,
  mode: ColorMode = 'stage',
): THREE.Mesh {
  const material = new THREE.MeshLambertMaterial({
    color: primitiveColor(payload, mode),
  })
  const mesh = new THREE.Mesh(geometryFrom(payload), material)
  mesh.userData[PRIMITIVE_ID] = payload.id
  mesh.name = `primitive_${payload.id}`
  return mesh
}

export function buildReferenceMesh(payload: MeshPayload): THREE.Mesh {
  const material = new THREE.MeshLambertMaterial({
    color: 0xffffff,
    transparent: true,
    opacity: 0.25,
    depthWrite: false,
  })
  const mesh = new THREE.Mesh(geometryFrom(payload), material)
  mesh.name = 'reference'
  return mesh
}

/** Keeps the primitive group in sync with a snapshot, re-fetching only ids
 * that appeared; refinement invalidates one parent and adds its children. */
export class PrimitiveGroup {
  readonly group = new THREE.Group()
  private byId = new Map<number, THREE.Mesh>()

  constructor(
    private readonly fetchMesh: (id: number) => Promise<PrimitiveMeshPayload>,
  ) {}

  ids(): number[] {
    return [...this.byId.keys()]
  }

  meshes(): THREE.Mesh[] {
    return [...this.byId.values()]
  }

  async sync(ids: number[], mode: ColorMode): Promise<void> {
    const wanted = new Set(ids)
    for (const [id, mesh] of this.byId) {
      if (!wanted.has(id)) {
        this.group.remove(mesh)
        mesh.geometry.dispose()
        this.byId.delete(id)
      }
    }
    const missing = ids.filter((id) => !this.byId.has(id))
    const payloads = await Promise.all(missing.map((id) => this.fetchMesh(id)))
    for (const payload of payloads) {
      const mesh = buildPrimitiveMesh(payload, mode)
      this.byId.set(payload.id, mesh)
      this.group.add(mesh)
    }
  }

  recolor(mode: ColorMode, stages: Map<number, PrimitiveMeshPayload['stage']>) {
    for (const [id, mesh] of this.byId) {
      const stage = stages.get(id)
      if (stage === undefined) continue
      const color = mode === 'id' ? idColor(id) : STAGE_COLORS[stage]
      ;(mesh.material as THREE.MeshLambertMaterial).color.setHex(color)
    }
  }
}
