import { Window } from 'happy-dom'
import { beforeEach, describe, expect, test } from 'vitest'

import { AnnotationApp, splitReferencesBlock } from '../src/app.js'
import type { ItemView } from '../src/api.js'

const CONDITION_TOKENS = /\b(rag|no_rag|condition)\b/i

interface Call {
  url: string
  method: string
  headers: Record<string, string>
  body?: Record<string, unknown>
}

/** Programmable fetch double: handlers consume requests in order per route. */
function makeServer() {
  const calls: Call[] = []
  const nextQueue: Array<{ status: number; body?: unknown }> = []
  const ratingHandlers: Array<(body: Record<string, unknown>) => { status: number; body?: unknown }> = []
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input)
    const method = init?.method ?? 'GET'
    const body = init?.body ? (JSON.parse(String(init.body)) as Record<string, unknown>) : undefined
    calls.push({ url, method, headers: (init?.headers as Record<string, string>) ?? {}, body })
    if (url.includes('/next')) {
      const planned = nextQueue.shift() ?? { status: 500, body: 'next queue exhausted' }
      return respond(planned.status, planned.body)
    }
    if (url.endsWith('/api/ratings')) {
      const handler = ratingHandlers.shift()
      if (!handler) return respond(500, 'rating queue exhausted')
      const planned = handler(body ?? {})
      return respond(planned.status, planned.body)
    }
    return respond(404, 'unmatched route')
  }) as typeof fetch
  return { fetchFn, calls, nextQueue, ratingHandlers }
}

function respond(status: number, body?: unknown): Response {
  if (status === 204 || body === undefined) return new Response(null, { status })
  return new Response(JSON.stringify(body), { status, headers: { 'Content-Type': 'application/json' } })
}

function makeStorage(initialToken?: string) {
  const data = new Map<string, string>()
  if (initialToken) data.set('evrag_token', initialToken)
  return {
    getItem: (key: string) => data.get(key) ?? null,
    setItem: (key: string, value: string) => void data.set(key, value),
    removeItem: (key: string) => void data.delete(key),
  }
}

function item(position: number, total: number, remaining: number, text?: string): ItemView {
  return {
    item_id: `itm${position.toString().padStart(3, '0')}`,
    position,
    total,
    remaining,
    presented_text:
      text ??
      `Answer body for item ${position} with clinical guidance.\n\nReferences:\n1. Author A. Title ${position}. Journal. 2020;1(1):1-2.`,
  }
}

const okAck = () => ({ status: 200, body: { accepted: true, superseded: false, remaining: 0 } })

function makeApp(server: ReturnType<typeof makeServer>, token = 'tok') {
  const window = new Window({ url: 'http://ui.test/' })
  const doc = window.document as unknown as Document
  const root = doc.getElementById('app') ?? doc.body.appendChild(doc.createElement('main'))
  root.id = 'app'
  const app = new AnnotationApp(root as HTMLElement, 'sess1', {
    doc,
    fetchFn: server.fetchFn,
    baseUrl: 'http://svc.test',
    storage: makeStorage(token),
  })
  return { app, root: root as HTMLElement, window }
}

function clickScore(root: HTMLElement, axis: string, score: number): void {
  const button = root.querySelector(`button.score[data-axis="${axis}"][data-score="${score}"]`) as HTMLElement
  expect(button).toBeTruthy()
  button.click()
}

describe('splitReferencesBlock', () => {
  test('splits at the last references header, byte-preserving', () => {
    const text = 'Body mentions references: none inline.\n\nReferences:\n1. Entry.'
    const { body, refs } = splitReferencesBlock(text)
    expect(body + refs).toBe(text)
    expect(refs).toMatch(/^References:/)
  })

  test('no header means no refs block', () => {
    expect(splitReferencesBlock('plain answer')).toEqual({ body: 'plain answer', refs: null })
  })
})

describe('AnnotationApp', () => {
  let server: ReturnType<typeof makeServer>

  beforeEach(() => {
    server = makeServer()
  })

  test('renders first item with progress and verbatim text', async () => {
    const text = 'Answer line one.\n  Indented  spacing kept.\n\nReferences:\n1. Author A. T. J. 2020;1(1):1-2.'
    server.nextQueue.push({ status: 200, body: item(1, 60, 48, text) })
    const { app, root } = makeApp(server)
    await app.start()
    expect(app.phase).toBe('item')
    expect(root.querySelector('.position-text')?.textContent).toBe('item 1 of 60')
    expect(root.querySelector('.progress-text')?.textContent).toBe('12 of 60 rated')
    expect((root.querySelector('.progress-fill') as HTMLElement).style.width).toBe('20%')
    const rendered =
      (root.querySelector('.answer-text')?.textContent ?? '') + (root.querySelector('.refs-block')?.textContent ?? '')
    expect(rendered).toBe(text)
    expect(root.querySelector('.refs-block')).toBeTruthy()
  })

  test('DOM never contains condition tokens', async () => {
    server.nextQueue.push({ status: 200, body: item(1, 4, 4) })
    const { app, root } = makeApp(server)
    await app.start()
    expect(root.innerHTML).not.toMatch(CONDITION_TOKENS)
  })

  test('submit disabled until all three axes set', async () => {
    server.nextQueue.push({ status: 200, body: item(1, 4, 4) })
    const { app, root } = makeApp(server)
    await app.start()
    const submit = root.querySelector('#submit') as HTMLButtonElement
    expect(submit.disabled).toBe(true)
    clickScore(root, 'accuracy', 4)
    clickScore(root, 'completeness', 3)
    expect(submit.disabled).toBe(true)
    clickScore(root, 'attribution', 2)
    expect(submit.disabled).toBe(false)
  })

  test('successful submit posts three ratings and advances', async () => {
    server.nextQueue.push({ status: 200, body: item(1, 4, 4) }, { status: 200, body: item(2, 4, 3) })
    server.ratingHandlers.push(okAck, okAck, okAck)
    const { app, root } = makeApp(server)
    await app.start()
    clickScore(root, 'accuracy', 4)
    clickScore(root, 'completeness', 3)
    clickScore(root, 'attribution', 2)
    await app.submitCurrent()
    const posts = server.calls.filter((c) => c.method === 'POST')
    expect(posts.map((c) => c.body?.axis)).toEqual(['accuracy', 'completeness', 'attribution'])
    expect(posts.map((c) => c.body?.score)).toEqual([4, 3, 2])
    expect(posts.every((c) => c.body?.item_id === 'itm001')).toBe(true)
    expect(root.querySelector('.position-text')?.textContent).toBe('item 2 of 4')
  })

  test('partial failure keeps unacknowledged axes queued and retries only those', async () => {
    server.nextQueue.push({ status: 200, body: item(1, 4, 4) }, { status: 204 })
    server.ratingHandlers.push(okAck, () => ({ status: 503, body: 'down' }), okAck, okAck)
    const { app, root } = makeApp(server)
    await app.start()
    clickScore(root, 'accuracy', 5)
    clickScore(root, 'completeness', 5)
    clickScore(root, 'attribution', 5)
    await app.submitCurrent()
    expect(root.querySelector('.retry-banner')).toBeTruthy()
    expect(app.phase).toBe('error')
    await app.submitCurrent()
    const posts = server.calls.filter((c) => c.method === 'POST')
    // accuracy acked once; completeness failed then retried; attribution once
    expect(posts.map((c) => c.body?.axis)).toEqual(['accuracy', 'completeness', 'completeness', 'attribution'])
    expect(app.phase).toBe('complete')
  })

  test('fresh 204 shows the empty-session notice', async () => {
    server.nextQueue.push({ status: 204 })
    const { app, root } = makeApp(server)
    await app.start()
    expect(app.phase).toBe('complete')
    expect(root.textContent).toContain('Nothing to rate')
  })

  test('completion after rating shows the count summary', async () => {
    server.nextQueue.push({ status: 200, body: item(4, 4, 1) }, { status: 204 })
    server.ratingHandlers.push(okAck, okAck, okAck)
    const { app, root } = makeApp(server)
    await app.start()
    clickScore(root, 'accuracy', 1)
    clickScore(root, 'completeness', 2)
    clickScore(root, 'attribution', 3)
    await app.submitCurrent()
    expect(root.textContent).toContain('Session complete')
    expect(root.textContent).toContain('1 of 4')
  })

  test('401 prompts for a token and proceeds after entry', async () => {
    server.nextQueue.push({ status: 401 }, { status: 200, body: item(1, 2, 2) })
    const { app, root } = makeApp(server)
    await app.start()
    expect(app.phase).toBe('token')
    const input = root.querySelector('input.token-input') as HTMLInputElement
    input.value = 'fresh-token'
    ;(root.querySelector('button.primary') as HTMLElement).click()
    await new Promise((resolve) => setTimeout(resolve, 0))
    expect(app.phase).toBe('item')
    const authed = server.calls.at(-1)
    expect(authed?.headers['Authorization']).toBe('Bearer fresh-token')
  })

  test('missing token prompts before any request', async () => {
    const { app } = makeApp(server, '')
    await app.start()
    expect(app.phase).toBe('token')
    expect(server.calls).toHaveLength(0)
  })

  test('network failure on next shows retry banner and recovers', async () => {
    let first = true
    const failingFetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
      if (first) {
        first = false
        throw new TypeError('network down')
      }
      return server.fetchFn(input, init)
    }) as typeof fetch
    server.nextQueue.push({ status: 200, body: item(1, 2, 2) })
    const window = new Window({ url: 'http://ui.test/' })
    const doc = window.document as unknown as Document
    const root = doc.body.appendChild(doc.createElement('main')) as HTMLElement
    const app = new AnnotationApp(root, 'sess1', {
      doc,
      fetchFn: failingFetch,
      baseUrl: 'http://svc.test',
      storage: makeStorage('tok'),
    })
    await app.start()
    expect(app.phase).toBe('error')
    const retry = root.querySelector('button.retry') as HTMLElement
    retry.click()
    await new Promise((resolve) => setTimeout(resolve, 0))
    expect(app.phase).toBe('item')
  })

  test('digits rate the focused axis and Tab cycles axes', async () => {
    server.nextQueue.push({ status: 200, body: item(1, 4, 4) })
    const { app, root, window } = makeApp(server)
    await app.start()
    const key = (key: string) =>
      root.dispatchEvent(new window.KeyboardEvent('keydown', { key, bubbles: true, cancelable: true }))
    key('4')
    key('Tab')
    key('3')
    key('Tab')
    key('5')
    const selected = Array.from(root.querySelectorAll('button.score.selected')).map(
      (b) => [(b as HTMLElement).dataset.axis, (b as HTMLElement).dataset.score],
    )
    expect(selected).toEqual([
      ['accuracy', '4'],
      ['completeness', '3'],
      ['attribution', '5'],
    ])
    expect((root.querySelector('#submit') as HTMLButtonElement).disabled).toBe(false)
  })

  test('supersession surfaces a toast', async () => {
    server.nextQueue.push({ status: 200, body: item(1, 2, 2) }, { status: 204 })
    server.ratingHandlers.push(
      () => ({ status: 200, body: { accepted: true, superseded: true, remaining: 1 } }),
      okAck,
      okAck,
    )
    const { app, root } = makeApp(server)
    await app.start()
    clickScore(root, 'accuracy', 2)
    clickScore(root, 'completeness', 2)
    clickScore(root, 'attribution', 2)
    await app.submitCurrent()
    const toast = root.ownerDocument.body.querySelector('.toast')
    expect(toast?.textContent ?? '').toContain('superseded')
  })
})
