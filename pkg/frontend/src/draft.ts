/** Per-item rating draft: three axes, each 1-5 or unset. */

export const AXES = ['accuracy', 'completeness', 'attribution'] as const
export type Axis = (typeof AXES)[number]

export const MIN_SCORE = 1
export const MAX_SCORE = 5

export class RatingDraft {
  private scores: Partial<Record<Axis, number>> = {}

  set(axis: Axis, score: number): void {
    if (!Number.isInteger(score) || score < MIN_SCORE || score > MAX_SCORE) {
      throw new Error(`score ${score} outside ${MIN_SCORE}..${MAX_SCORE}`)
    }
    this.scores[axis] = score
  }

  get(axis: Axis): number | undefined {
    return this.scores[axis]
  }

  /** Submission is enabled only when every axis is set. */
  isComplete(): boolean {
    return AXES.every((axis) => this.scores[axis] !== undefined)
  }

  setAxes(): Axis[] {
    return AXES.filter((axis) => this.scores[axis] !== undefined)
  }

  /** Axes still needing a server acknowledgment, in submission order. */
  pending(acked: ReadonlySet<Axis>): Axis[] {
    return AXES.filter((axis) => !acked.has(axis))
  }

  reset(): void {
    this.scores = {}
  }
}
