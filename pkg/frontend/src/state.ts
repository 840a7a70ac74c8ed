import type { AbstractionSnapshot, ColorMode } from './types.js'

export interface ViewState {
  snapshot: AbstractionSnapshot | null
  selectedId: number | null
  colorMode: ColorMode
  showReference: boolean
  splits: number
  notice: string | null
}

export function initialViewState(): ViewState {
  return {
    snapshot: null,
    selectedId: null,
    colorMode: 'stage',
    showReference: true,
    splits: 2,
    notice: null,
  }
}

function hasPrimitive(snapshot: AbstractionSnapshot | null, id: number): boolean {
  return snapshot !== null && snapshot.primitives.some((p) => p.id === id)
}

/** Replace the snapshot, dropping the selection if its primitive vanished. */
export function withSnapshot(
  state: ViewState,
  snapshot: AbstractionSnapshot,
): ViewState {
  const selectedId =
    state.selectedId !== null && hasPrimitive(snapshot, state.selectedId)
      ? state.selectedId
      : null
  return { ...state, snapshot, selectedId, notice: null }
}

export function withSelection(state: ViewState, id: number | null): ViewState {
  if (id !== null && !hasPrimitive(state.snapshot, id)) {
    throw new Error(`selected id ${id} not in snapshot`)
  }
  return { ...state, selectedId: id }
}

export function withColorMode(state: ViewState, mode: ColorMode): ViewState {
  return { ...state, colorMode: mode }
}

export function withReferenceToggled(state: ViewState): ViewState {
  return { ...state, showReference: !state.showReference }
}

export function withSplits(state: ViewState, splits: number): ViewState {
  if (!Number.isInteger(splits) || splits < 1 || splits > 4) {
    throw new Error('splits must be an integer in [1, 4]')
  }
  return { ...state, splits }
}

export function withNotice(state: ViewState, notice: string | null): ViewState {
  return { ...state, notice }
}
