// Shared domain types mirroring the study HTTP API payloads.

/** A blinded question/answer pair as served by GET /api/next. */
export interface PairView {
  pair_id: string
  title: string
  body: string
  answer: string
  rubric_version: string
}

export const SCORE_DIMENSIONS = [
  'alignment',
  'accuracy',
  'readability',
  'confidence',
] as const

export type ScoreDimension = (typeof SCORE_DIMENSIONS)[number]

/** Four 0-3 selectors; null means "not selected yet". */
export type ScoreForm = Record<ScoreDimension, number | null>

/** Rubric as served by GET /api/rubric: four level texts per dimension. */
export interface Rubric {
  rubric_version: string
  rubric: Record<ScoreDimension, string[]>
}

export interface Progress {
  rated: number
  assigned: number
}

export interface RatingSubmission {
  pair_id: string
  rater_id: string
  alignment: number
  accuracy: number
  readability: number
  confidence: number
}

export interface AgreementReport {
  alpha_per_dimension: Record<string, number | null>
  pairwise_tau: Record<string, number | null>
}

export interface AdjudicationItem {
  pair_id: string
  rater_id: string
}

export function emptyForm(): ScoreForm {
  return { alignment: null, accuracy: null, readability: null, confidence: null }
}

export function formComplete(form: ScoreForm): boolean {
  return SCORE_DIMENSIONS.every((d) => form[d] !== null)
}
