import { ApiClient, ApiError } from './api.js'
import {
  ViewState,
  initialViewState,
  withNotice,
  withSelection,
  withSnapshot,
} from './state.js'

/** Drives the refinement loop; geometry is never mutated client-side, every
 * transition replaces the snapshot with the server's response. */
export class ViewerController {
  state: ViewState = initialViewState()

  constructor(private readonly api: ApiClient) {}

  async load(): Promise<ViewState> {
    this.state = withSnapshot(this.state, await this.api.abstraction())
    return this.state
  }

  select(id: number | null): ViewState {
    this.state = withSelection(this.state, id)
    return this.state
  }

  /** Refine the selected primitive; selects its first child on success. */
  async refineSelected(): Promise<ViewState> {
    const target = this.state.selectedId
    if (target === null) {
      this.state = withNotice(this.state, 'nothing selected')
      return this.state
    }
    try {
      const snapshot = await this.api.refine(target, this.state.splits)
      this.state = withSnapshot(this.state, snapshot)
      const child = snapshot.primitives.find((p) => p.parent === target)
      this.state = withSelection(this.state, child ? child.id : null)
    } catch (error) {
      this.state = withNotice(this.state, this.describe(error))
    }
    return this.state
  }

  async undo(): Promise<ViewState> {
    try {
      this.state = withSnapshot(this.state, await this.api.undo())
    } catch (error) {
      this.state = withNotice(this.state, this.describe(error))
    }
    return this.state
  }

  private describe(error: unknown): string {
    if (error instanceof ApiError) {
      if (error.status === 409) return 'refinement in flight'
      if (error.status === 404) return 'primitive no longer exists'
      return error.detail
    }
    return String(error)
  }
}
