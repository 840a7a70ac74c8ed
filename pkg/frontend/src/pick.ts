import * as THREE from 'three'

import { PRIMITIVE_ID } from './scene.js'

/** Frontmost primitive id hit by the ray, or null on a miss. */
export function pickAlongRay(
  raycaster: THREE.Raycaster,
  meshes: THREE.Object3D[],
): number | null {
  const hits = raycaster.intersectObjects(meshes, false)
  for (const hit of hits) {
    const id = hit.object.userData[PRIMITIVE_ID]
    if (typeof id === 'number') return id
  }
  return null
}

/** Pick from a cursor position inside a DOM element. */
export function pickAtCursor(
  clientX: number,
  clientY: number,
  element: HTMLElement,
  camera: THREE.Camera,
  meshes: THREE.Object3D[],
): number | null {
  const rect = element.getBoundingClientRect()
  if (rect.width <= 0 || rect.height <= 0) return null
  const x = ((clientX - rect.left) / rect.width) * 2 - 1
  const y = -(((clientY - rect.top) / rect.height) * 2 - 1)
  const raycaster = new THREE.Raycaster()
  raycaster.setFromCamera(new THREE.Vector2(x, y), camera)
  return pickAlongRay(raycaster, meshes)
}
