/** Typed client for the annotation endpoints.
 *
 * The server is the single source of truth: this client holds no state
 * beyond the bearer-token provider, and network failures are surfaced as
 * thrown errors so the caller can queue retries without losing data.
 */

import type { Axis } from './draft.js'

export interface ItemView {
  item_id: string
  position: number
  total: number
  presented_text: string
  remaining: number
}

export interface RatingAck {
  accepted: boolean
  superseded: boolean
  remaining: number
}

export type NextResult =
  | { kind: 'item'; item: ItemView }
  | { kind: 'complete' }
  | { kind: 'auth'; status: number }
  | { kind: 'error'; status: number; message: string }

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: () => string | null,
    private readonly fetchFn: typeof fetch,
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' }
    const token = this.token()
    if (token) headers['Authorization'] = `Bearer ${token}`
    return headers
  }

  /** Next unrated item, completion, or an auth/error outcome. Throws only
   * on network-level failure. */
  async fetchNext(sessionId: string): Promise<NextResult> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}/next`, {
      headers: this.headers(),
    })
    if (resp.status === 204) return { kind: 'complete' }
    if (resp.status === 401 || resp.status === 403) return { kind: 'auth', status: resp.status }
    if (!resp.ok) {
      const body = await resp.text()
      return { kind: 'error', status: resp.status, message: body.slice(0, 200) }
    }
    return { kind: 'item', item: (await resp.json()) as ItemView }
  }

  /** One rating for one axis. Throws on network failure or non-2xx so the
   * unacknowledged axis stays in the retry queue. */
  async submitRating(sessionId: string, itemId: string, axis: Axis, score: number): Promise<RatingAck> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/ratings`, {
      method: 'POST',
      headers: this.headers(),
      body: JSON.stringify({ session_id: sessionId, item_id: itemId, axis, score }),
    })
    if (!resp.ok) {
      throw new Error(`rating submission failed: HTTP ${resp.status}`)
    }
    return (await resp.json()) as RatingAck
  }
}
