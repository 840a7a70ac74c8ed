import * as THREE from 'three'

import { ApiClient } from './api.js'
import { ViewerController } from './controller.js'
import { buildReferenceMesh, PrimitiveGroup } from './scene.js'
import { pickAtCursor } from './pick.js'
import {
  withColorMode,
  withReferenceToggled,
  withSplits,
} from './state.js'
import type { ColorMode, Stage } from './types.js'

const COLOR_MODES: ColorMode[] = ['stage', 'id', 'overlap']

async function boot(): Promise<void> {
  const container = document.getElementById('viewer')
  const hud = document.getElementById('hud')
  if (!container || !hud) throw new Error('missing #viewer or #hud')

  const api = new ApiClient(window.location.origin)
  const controller = new ViewerController(api)
  const primitives = new PrimitiveGroup((id) => api.mesh(id))

  const scene = new THREE.Scene()
  scene.background = new THREE.Color(0x181c22)
  scene.add(new THREE.AmbientLight(0xffffff, 0.5))
  const sun = new THREE.DirectionalLight(0xffffff, 1.2)
  sun.position.set(2, 3, 4)
  scene.add(sun)
  scene.add(primitives.group)

  const camera = new THREE.PerspectiveCamera(45, 1, 0.01, 50)
  camera.position.set(2.2, 1.6, 2.2)
  camera.lookAt(0, 0, 0)

  const renderer = new THREE.WebGLRenderer({ antialias: true })
  container.appendChild(renderer.domElement)
  renderer.domElement.tabIndex = 0

  const reference = buildReferenceMesh(await api.referenceMesh())
  scene.add(reference)

  async function refresh(): Promise<void> {
    const { state } = controller
    const ids = state.snapshot ? state.snapshot.primitives.map((p) => p.id) : []
    await primitives.sync(ids, state.colorMode)
    const stages = new Map<number, Stage>(
      (state.snapshot?.primitives ?? []).map((p) => [p.id, p.stage]),
    )
    primitives.recolor(state.colorMode, stages)
    for (const mesh of primitives.meshes()) {
      const selected = mesh.userData.primitiveId === state.selectedId
      ;(mesh.material as THREE.MeshLambertMaterial).emissive.setHex(
        selected ? 0x333300 : 0x000000,
      )
    }
    reference.visible = state.showReference
    const metrics = await api.metrics()
    hud!.textContent =
      `n=${metrics.n_primitives}  IoU=${metrics.voxel_iou.toFixed(3)}  ` +
      `OR=${metrics.overlap_rate?.toFixed(3) ?? 'n/a'}  ` +
      `splits=${state.splits}  color=${state.colorMode}` +
      (state.notice ? `  [${state.notice}]` : '')
  }

  function resize(): void {
    const w = container!.clientWidth || window.innerWidth
    const h = container!.clientHeight || window.innerHeight
    camera.aspect = w / h
    camera.updateProjectionMatrix()
    renderer.setSize(w, h)
  }

  renderer.domElement.addEventListener('click', (event) => {
    const id = pickAtCursor(
      event.clientX,
      event.clientY,
      renderer.domElement,
      camera,
      primitives.meshes(),
    )
    controller.select(id)
    void refresh()
  })

  function cycleSelection(step: number): void {
    const ids = controller.state.snapshot?.primitives.map((p) => p.id) ?? []
    if (ids.length === 0) return
    const at = controller.state.selectedId
    const index = at === null ? -1 : ids.indexOf(at)
    controller.select(ids[(index + step + ids.length) % ids.length] ?? null)
  }

  // every transition is reachable by keyboard
  renderer.domElement.addEventListener('keydown', (event) => {
    const { state } = controller
    if (event.key === 'ArrowRight' || event.key === 'Tab') cycleSelection(1)
    else if (event.key === 'ArrowLeft') cycleSelection(-1)
    else if (event.key === 'Escape') controller.select(null)
    else if (event.key === 'r') void controller.refineSelected().then(refresh)
    else if (event.key === 'u') void controller.undo().then(refresh)
    else if (event.key === 't')
      controller.state = withReferenceToggled(state)
    else if (event.key === 'c')
      controller.state = withColorMode(
        state,
        COLOR_MODES[
          (COLOR_MODES.indexOf(state.colorMode) + 1) % COLOR_MODES.length
        ] ?? 'stage',
      )
    else if ('1234'.includes(event.key))
      controller.state = withSplits(state, Number(event.key))
    else return
    event.preventDefault()
    void refresh()
  })

  window.addEventListener('resize', resize)
  resize()
  await controller.load()
  await refresh()

  renderer.setAnimationLoop(() => renderer.render(scene, camera))
}

void boot()
