/** Blinded annotation screen: fetch next item, score three axes, submit.
 *
 * Design constraints honored here:
 * - the DOM renders the presented text verbatim (no truncation, no markup
 *   interpretation) and never receives any condition marker;
 * - ratings are submitted one POST per axis and the UI advances only after
 *   all three acknowledgments; failed axes stay queued for retry;
 * - no persistence besides the bearer token in session storage and the
 *   in-flight retry queue -- reloading resumes from server state;
 * - keyboard: digits 1-5 score the focused axis, Tab cycles the axes.
 */

import { ApiClient, ItemView } from './api.js'
import { AXES, Axis, MAX_SCORE, MIN_SCORE, RatingDraft } from './draft.js'

export interface AppDeps {
  doc: Document
  fetchFn: typeof fetch
  baseUrl: string
  storage: Pick<Storage, 'getItem' | 'setItem' | 'removeItem'>
}

const TOKEN_KEY = 'evrag_token'
const REFS_HEADER = /(^|\n)[ \t]*(references?|sources)[ \t]*:?/gi

/** Split the verbatim answer at the last references header so the
 * reference block can be styled monospace without altering one byte. */
export function splitReferencesBlock(text: string): { body: string; refs: string | null } {
  let last: RegExpExecArray | null = null
  for (const match of text.matchAll(REFS_HEADER)) {
    last = match as unknown as RegExpExecArray
  }
  if (!last) return { body: text, refs: null }
  const cut = last.index + last[1].length
  return { body: text.slice(0, cut), refs: text.slice(cut) }
}

type Phase = 'loading' | 'token' | 'item' | 'complete' | 'error'

export class AnnotationApp {
  private readonly api: ApiClient
  private readonly doc: Document
  private draft = new RatingDraft()
  private acked = new Set<Axis>()
  private current: ItemView | null = null
  private focusedAxis = 0
  private completedHere = 0
  private lastTotal: number | null = null
  private sawAnyItem = false
  phase: Phase = 'loading'

  constructor(
    private readonly root: HTMLElement,
    private readonly sessionId: string,
    private readonly deps: AppDeps,
  ) {
    this.doc = deps.doc
    this.api = new ApiClient(deps.baseUrl, () => deps.storage.getItem(TOKEN_KEY), deps.fetchFn)
    this.root.addEventListener('keydown', (event) => this.onKeyDown(event as KeyboardEvent))
  }

  async start(): Promise<void> {
    if (!this.deps.storage.getItem(TOKEN_KEY)) {
      this.renderTokenPrompt()
      return
    }
    await this.loadNext()
  }

  async loadNext(): Promise<void> {
    this.phase = 'loading'
    let result
    try {
      result = await this.api.fetchNext(this.sessionId)
    } catch (err) {
      this.renderRetryBanner(`Network problem while loading the next item: ${String(err)}`, () => this.loadNext())
      return
    }
    if (result.kind === 'auth') {
      this.renderTokenPrompt(result.status === 403 ? 'This session belongs to a different token.' : undefined)
      return
    }
    if (result.kind === 'error') {
      this.renderRetryBanner(`Server error (${result.status}).`, () => this.loadNext())
      return
    }
    if (result.kind === 'complete') {
      this.renderComplete()
      return
    }
    this.current = result.item
    this.sawAnyItem = true
    this.lastTotal = result.item.total
    this.draft.reset()
    this.acked.clear()
    this.focusedAxis = 0
    this.renderItem(result.item)
  }

  /** Submit every not-yet-acknowledged axis; advance only when all three
   * are acknowledged. Partial failures keep the remaining axes queued. */
  async submitCurrent(): Promise<void> {
    const item = this.current
    if (!item || !this.draft.isComplete()) return
    this.setSubmitEnabled(false)
    let superseded = false
    for (const axis of this.draft.pending(this.acked)) {
      const score = this.draft.get(axis)
      if (score === undefined) continue
      try {
        const ack = await this.api.submitRating(this.sessionId, item.item_id, axis, score)
        this.acked.add(axis)
        superseded = superseded || ack.superseded
      } catch (err) {
        this.renderRetryBanner(
          `Could not save the ${axis} rating: ${String(err)}. Nothing was lost; unsaved axes will be retried.`,
          () => this.submitCurrent(),
        )
        return
      }
    }
    if (superseded) this.toast('An earlier rating for this item was superseded.')
    this.completedHere += 1
    await this.loadNext()
  }

  // --- rendering -----------------------------------------------------------

  private clear(): void {
    while (this.root.firstChild) this.root.removeChild(this.root.firstChild)
  }

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
  ): HTMLElementTagNameMap[K] {
    const node = this.doc.createElement(tag)
    if (className) node.className = className
    if (text !== undefined) node.textContent = text
    return node
  }

  private renderTokenPrompt(message?: string): void {
    this.phase = 'token'
    this.clear()
    const panel = this.el('div', 'token-panel')
    panel.appendChild(this.el('h2', undefined, 'Annotator sign-in'))
    if (message) panel.appendChild(this.el('p', 'error-text', message))
    panel.appendChild(this.el('p', undefined, 'Paste your access token to begin rating.'))
    const input = this.el('input', 'token-input')
    input.type = 'password'
    input.setAttribute('aria-label', 'access token')
    const button = this.el('button', 'primary', 'Start')
    button.addEventListener('click', () => {
      const value = input.value.trim()
      if (!value) return
      this.deps.storage.setItem(TOKEN_KEY, value)
      void this.loadNext()
    })
    panel.appendChild(input)
    panel.appendChild(button)
    this.root.appendChild(panel)
  }

  private renderRetryBanner(message: string, retry: () => Promise<void>): void {
    this.phase = 'error'
    const existing = this.root.querySelector('.retry-banner')
    if (existing) existing.remove()
    const banner = this.el('div', 'retry-banner')
    banner.appendChild(this.el('span', undefined, message))
    const button = this.el('button', 'retry', 'Retry')
    button.addEventListener('click', () => {
      banner.remove()
      void retry()
    })
    banner.appendChild(button)
    this.root.appendChild(banner)
    this.setSubmitEnabled(this.draft.isComplete())
  }

  private renderComplete(): void {
    this.phase = 'complete'
    this.clear()
    const panel = this.el('div', 'complete-panel')
    if (!this.sawAnyItem && this.completedHere === 0) {
      panel.appendChild(this.el('h2', undefined, 'Nothing to rate'))
      panel.appendChild(
        this.el('p', undefined, 'This session has no pending items. It may be empty or already finished.'),
      )
    } else {
      panel.appendChild(this.el('h2', undefined, 'Session complete'))
      const total = this.lastTotal !== null ? ` of ${this.lastTotal} items` : ''
      panel.appendChild(
        this.el('p', undefined, `You rated ${this.completedHere}${total} in this sitting. Thank you.`),
      )
    }
    this.root.appendChild(panel)
  }

  private renderItem(item: ItemView): void {
    this.phase = 'item'
    this.clear()

    const rated = item.total - item.remaining
    const header = this.el('div', 'progress')
    const bar = this.el('div', 'progress-track')
    const fill = this.el('div', 'progress-fill')
    fill.style.width = `${item.total ? Math.round((100 * rated) / item.total) : 0}%`
    bar.appendChild(fill)
    header.appendChild(bar)
    header.appendChild(this.el('span', 'progress-text', `${rated} of ${item.total} rated`))
    header.appendChild(this.el('span', 'position-text', `item ${item.position} of ${item.total}`))
    this.root.appendChild(header)

    const textPanel = this.el('div', 'presented')
    const { body, refs } = splitReferencesBlock(item.presented_text)
    textPanel.appendChild(this.el('span', 'answer-text', body))
    if (refs !== null) {
      textPanel.appendChild(this.el('span', 'refs-block', refs))
    }
    this.root.appendChild(textPanel)

    const form = this.el('div', 'rating-form')
    AXES.forEach((axis, index) => {
      form.appendChild(this.renderAxisGroup(axis, index))
    })
    const submit = this.el('button', 'primary submit', 'Submit ratings')
    submit.id = 'submit'
    submit.disabled = true
    submit.addEventListener('click', () => void this.submitCurrent())
    form.appendChild(submit)
    this.root.appendChild(form)
    this.focusAxis(0)
  }

  private renderAxisGroup(axis: Axis, index: number): HTMLElement {
    const group = this.el('div', 'axis-group')
    group.dataset.axis = axis
    group.tabIndex = 0
    group.setAttribute('role', 'radiogroup')
    group.setAttribute('aria-label', axis)
    group.appendChild(this.el('span', 'axis-label', `${axis} (1 poor .. 5 perfect)`))
    const buttons = this.el('div', 'score-buttons')
    for (let score = MIN_SCORE; score <= MAX_SCORE; score++) {
      const button = this.el('button', 'score', String(score))
      button.dataset.axis = axis
      button.dataset.score = String(score)
      button.addEventListener('click', () => {
        this.setScore(axis, score)
        this.focusAxis(index)
      })
      buttons.appendChild(button)
    }
    group.appendChild(buttons)
    group.addEventListener('focus', () => {
      this.focusedAxis = index
      this.markFocused()
    })
    return group
  }

  private setScore(axis: Axis, score: number): void {
    this.draft.set(axis, score)
    const group = this.root.querySelector(`.axis-group[data-axis="${axis}"]`)
    if (group) {
      group.querySelectorAll('button.score').forEach((button) => {
        button.classList.toggle('selected', (button as HTMLElement).dataset.score === String(score))
      })
      group.classList.add('axis-done')
    }
    this.setSubmitEnabled(this.draft.isComplete())
  }

  private setSubmitEnabled(enabled: boolean): void {
    const submit = this.root.querySelector('#submit') as HTMLButtonElement | null
    if (submit) submit.disabled = !enabled
  }

  private markFocused(): void {
    this.root.querySelectorAll('.axis-group').forEach((group, i) => {
      group.classList.toggle('focused', i === this.focusedAxis)
    })
  }

  private focusAxis(index: number): void {
    this.focusedAxis = ((index % AXES.length) + AXES.length) % AXES.length
    const groups = this.root.querySelectorAll('.axis-group')
    const target = groups[this.focusedAxis] as HTMLElement | undefined
    if (target) target.focus()
    this.markFocused()
  }

  private onKeyDown(event: KeyboardEvent): void {
    if (this.phase !== 'item') return
    if (event.key >= '1' && event.key <= '5') {
      this.setScore(AXES[this.focusedAxis], Number(event.key))
      event.preventDefault()
      return
    }
    if (event.key === 'Tab') {
      this.focusAxis(this.focusedAxis + (event.shiftKey ? -1 : 1))
      event.preventDefault()
    }
  }

  private toast(message: string): void {
    // attached to the body so it survives the next-item render
    const note = this.el('div', 'toast', message)
    this.doc.body.appendChild(note)
    setTimeout(() => note.remove(), 4000)
  }
}
