import type {
  AbstractionSnapshot,
  MeshPayload,
  MetricsPayload,
  PrimitiveMeshPayload,
} from './types.js'

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`${status}: ${detail}`)
    this.name = 'ApiError'
  }
}

async function parseJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText
    try {
      const body = (await response.json()) as { detail?: string }
      if (body.detail) detail = body.detail
    } catch {
      // keep the status text
    }
    throw new ApiError(response.status, detail)
  }
  return (await response.json()) as T
}

/** Typed client for the refinement service; one instance per session. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private get(path: string): Promise<Response> {
    return this.fetchImpl(this.baseUrl + path)
  }

  private post(path: string, body?: unknown): Promise<Response> {
    return this.fetchImpl(this.baseUrl + path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: body === undefined ? '{}' : JSON.stringify(body),
    })
  }

  async abstraction(): Promise<AbstractionSnapshot> {
    return parseJson(await this.get('/abstraction'))
  }

  async mesh(id: number): Promise<PrimitiveMeshPayload> {
    return parseJson(await this.get(`/mesh/${id}`))
  }

  async referenceMesh(): Promise<MeshPayload> {
    return parseJson(await this.get('/reference-mesh'))
  }

  async metrics(): Promise<MetricsPayload> {
    return parseJson(await this.get('/metrics'))
  }

  async refine(id: number, splits: number): Promise<AbstractionSnapshot> {
    return parseJson(await this.post('/refine', { id, splits }))
  }

  async undo(): Promise<AbstractionSnapshot> {
    return parseJson(await this.post('/undo'))
  }
}
