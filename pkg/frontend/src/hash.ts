/** Canonical serialization and hashing for snapshot comparison.

The server's Abstraction is the single source of truth; the UI verifies its
own copy against the server by comparing hashes of the key-sorted JSON. */

function canonicalize(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(canonicalize)
  if (value !== null && typeof value === 'object') {
    const out: Record<string, unknown> = {}
    for (const key of Object.keys(value).sort()) {
      out[key] = canonicalize((value as Record<string, unknown>)[key])
    }
    return out
  }
  return value
}

export function canonicalJson(value: unknown): string {
  return JSON.stringify(canonicalize(value))
}

/** FNV-1a over the canonical JSON, as a fixed-width hex string. */
export function snapshotHash(value: unknown): string {
  const text = canonicalJson(value)
  let hash = 0x811c9dc5
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i)
    hash = Math.imul(hash, 0x01000193) >>> 0
  }
  return hash.toString(16).padStart(8, '0')
}
