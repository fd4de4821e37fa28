// Senior-rater view: per-dimension agreement, pairwise tau, and the
// low-confidence adjudication queue with one-click adjudication forms.

import { ApiError, StudyClient } from './api.js'
import { SCORE_DIMENSIONS, type AdjudicationItem } from './types.js'

function fmt(value: number | null): string {
  return value === null ? 'n/a' : value.toFixed(3)
}

export class SeniorDashboard {
  constructor(
    private readonly root: HTMLElement,
    private readonly client: StudyClient,
    private readonly seniorId: string,
  ) {}

  async refresh(): Promise<void> {
    try {
      const [report, queue] = await Promise.all([
        this.client.agreement(),
        this.client.adjudicationQueue(this.seniorId),
      ])
      this.render(report.alpha_per_dimension, report.pairwise_tau, queue)
    } catch (err) {
      this.root.innerHTML = ''
      const banner = document.createElement('div')
      banner.className = 'error-banner'
      banner.textContent =
        err instanceof ApiError ? err.detail : 'Could not load the dashboard.'
      this.root.appendChild(banner)
    }
  }

  private render(
    alpha: Record<string, number | null>,
    tau: Record<string, number | null>,
    queue: AdjudicationItem[],
  ): void {
    this.root.innerHTML = ''

    const alphaTable = document.createElement('table')
    alphaTable.className = 'alpha-table'
    for (const [dim, value] of Object.entries(alpha)) {
      const row = alphaTable.insertRow()
      row.className = `alpha-row alpha-${dim}`
      row.insertCell().textContent = dim
      row.insertCell().textContent = fmt(value)
    }
    this.root.appendChild(alphaTable)

    const tauTable = document.createElement('table')
    tauTable.className = 'tau-table'
    for (const [pairKey, value] of Object.entries(tau)) {
      const row = tauTable.insertRow()
      row.className = 'tau-row'
      row.insertCell().textContent = pairKey
      row.insertCell().textContent = fmt(value)
    }
    this.root.appendChild(tauTable)

    const queueEl = document.createElement('div')
    queueEl.className = 'adjudication-queue'
    if (queue.length === 0) {
      queueEl.textContent = 'no adjudications pending'
    } else {
      for (const item of queue) {
        queueEl.appendChild(this.buildQueueRow(item))
      }
    }
    this.root.appendChild(queueEl)
  }

  private buildQueueRow(item: AdjudicationItem): HTMLElement {
    const row = document.createElement('form')
    row.className = 'queue-row'
    row.dataset.pairId = item.pair_id
    row.dataset.raterId = item.rater_id
    const label = document.createElement('span')
    label.textContent = `${item.pair_id} / ${item.rater_id}`
    row.appendChild(label)
    for (const dim of SCORE_DIMENSIONS) {
      const input = document.createElement('input')
      input.type = 'number'
      input.min = '0'
      input.max = '3'
      input.name = dim
      input.className = `adjudicate-${dim}`
      row.appendChild(input)
    }
    const submit = document.createElement('button')
    submit.type = 'button'
    submit.className = 'adjudicate-submit'
    submit.textContent = 'Adjudicate'
    submit.addEventListener('click', () => void this.adjudicate(row, item))
    row.appendChild(submit)
    return row
  }

  private async adjudicate(row: HTMLElement, item: AdjudicationItem): Promise<void> {
    const value = (dim: string): number => {
      const input = row.querySelector<HTMLInputElement>(`.adjudicate-${dim}`)
      return Number(input?.value ?? '0')
    }
    try {
      await this.client.submitAdjudication({
        pair_id: item.pair_id,
        rater_id: item.rater_id,
        alignment: value('alignment'),
        accuracy: value('accuracy'),
        readability: value('readability'),
        confidence: value('confidence'),
      })
      await this.refresh()
    } catch (err) {
      const banner = document.createElement('div')
      banner.className = 'error-banner'
      banner.textContent = err instanceof ApiError ? err.detail : 'Submit failed.'
      row.appendChild(banner)
    }
  }
}
