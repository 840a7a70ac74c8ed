/** Full refinement loop against a live service on the L-shape fixture:
 * load -> pick -> refine (splits=2) -> undo must restore a snapshot that is
 * hash-equal to the original. */

import { ChildProcess, spawn } from 'node:child_process'
import { fileURLToPath } from 'node:url'
import * as path from 'node:path'

import * as THREE from 'three'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { ApiClient } from '../src/api.js'
import { ViewerController } from '../src/controller.js'
import { snapshotHash } from '../src/hash.js'
import { pickAlongRay } from '../src/pick.js'
import { buildPrimitiveMesh } from '../src/scene.js'

const PORT = 8743
const BASE = `http://127.0.0.1:${PORT}`
const FIXTURES = path.join(
  path.dirname(fileURLToPath(import.meta.url)),
  'fixtures',
)

let server: ChildProcess

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/abstraction`)
      if (res.ok) return
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 500))
  }
  throw new Error('service did not come up')
}

beforeAll(async () => {
  server = spawn(
    'lightsq',
    [
      'serve',
      path.join(FIXTURES, 'lshape.lsqg'),
      path.join(FIXTURES, 'lshape.json'),
      '--port',
      String(PORT),
    ],
    { stdio: 'ignore' },
  )
  await waitForServer(60000)
})

afterAll(() => {
  server?.kill()
})

describe('viewer round trip', () => {
  it(
    'load, pick, refine, undo restores the original snapshot',
    { timeout: 300000 },
    async () => {
      const api = new ApiClient(BASE)
      const controller = new ViewerController(api)

      const initial = await controller.load()
      expect(initial.snapshot).not.toBeNull()
      const originalHash = snapshotHash(initial.snapshot)

      // build the scene exactly as the viewer would and pick by raycast
      const meshes = await Promise.all(
        initial.snapshot!.primitives.map(async (p) =>
          buildPrimitiveMesh(await api.mesh(p.id)),
        ),
      )
      const target = initial.snapshot!.primitives[0]!
      const center = new THREE.Vector3(...target.translation)
      const origin = new THREE.Vector3(3, 3, 3)
      const ray = new THREE.Raycaster()
      ray.set(origin, center.clone().sub(origin).normalize())
      const picked = pickAlongRay(ray, meshes)
      expect(picked).not.toBeNull()

      controller.select(picked)
      const refined = await controller.refineSelected()
      expect(refined.notice).toBeNull()
      const children = refined.snapshot!.primitives.filter(
        (p) => p.parent === picked,
      )
      expect(children.length).toBeGreaterThan(0)
      expect(snapshotHash(refined.snapshot)).not.toBe(originalHash)
      expect(refined.selectedId).toBe(children[0]!.id)

      const restored = await controller.undo()
      expect(restored.notice).toBeNull()
      expect(snapshotHash(restored.snapshot)).toBe(originalHash)
    },
  )
})
