// Thin client over the study HTTP API. All requests go through an
// injectable fetch function so tests can substitute an in-memory server.

import type {
  AdjudicationItem,
  AgreementReport,
  PairView,
  Progress,
  RatingSubmission,
  Rubric,
} from './types.js'

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>

/** Non-2xx response; carries the server's field-level detail when present. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`)
    this.name = 'ApiError'
  }
}

export type NextResult = { kind: 'pair'; pair: PairView } | { kind: 'done' }

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: string }
    return body.detail ?? resp.statusText
  } catch {
    return resp.statusText
  }
}

export class StudyClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchFn = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path)
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp))
    return (await resp.json()) as T
  }

  private async postJson(path: string, body: unknown): Promise<void> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    })
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp))
  }

  /** Next unrated pair for the rater, or `done` when the queue is empty. */
  async nextPair(raterId: string): Promise<NextResult> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/api/next?rater=${encodeURIComponent(raterId)}`,
    )
    if (resp.status === 204) return { kind: 'done' }
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp))
    return { kind: 'pair', pair: (await resp.json()) as PairView }
  }

  async progress(raterId: string): Promise<Progress> {
    return this.getJson(`/api/progress?rater=${encodeURIComponent(raterId)}`)
  }

  async rubric(): Promise<Rubric> {
    return this.getJson('/api/rubric')
  }

  async submitRating(rating: RatingSubmission): Promise<void> {
    await this.postJson('/api/rating', rating)
  }

  async agreement(): Promise<AgreementReport> {
    return this.getJson('/api/agreement')
  }

  async adjudicationQueue(seniorId: string): Promise<AdjudicationItem[]> {
    const body = await this.getJson<{ queue: AdjudicationItem[] }>(
      `/api/adjudication?senior=${encodeURIComponent(seniorId)}`,
    )
    return body.queue
  }

  async submitAdjudication(rating: RatingSubmission): Promise<void> {
    await this.postJson('/api/adjudication', rating)
  }
}
