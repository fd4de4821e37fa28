// Rater workflow: fetch the next blinded pair, collect four 0-3 scores
// against the inline rubric, submit, advance. The server is the source of
// truth for submitted ratings; unsubmitted form state lives only in this
// class and is lost on reload (documented behavior).

import { ApiError, StudyClient } from './api.js'
import {
  emptyForm,
  formComplete,
  SCORE_DIMENSIONS,
  type PairView,
  type Rubric,
  type ScoreDimension,
  type ScoreForm,
} from './types.js'

const SCORE_LEVELS = [0, 1, 2, 3]

export class RaterApp {
  private form: ScoreForm = emptyForm()
  private pair: PairView | null = null
  private rubric: Rubric | null = null

  constructor(
    private readonly root: HTMLElement,
    private readonly client: StudyClient,
    private readonly raterId: string,
  ) {}

  /** Load the rubric and the first pair, then render. */
  async start(): Promise<void> {
    try {
      this.rubric = await this.client.rubric()
      await this.loadNext()
    } catch (err) {
      this.renderError(err, () => this.start())
    }
  }

  private async loadNext(): Promise<void> {
    const next = await this.client.nextPair(this.raterId)
    if (next.kind === 'done') {
      this.pair = null
      this.renderDone()
      return
    }
    this.pair = next.pair
    this.form = emptyForm()
    await this.renderPair()
  }

  private async renderPair(): Promise<void> {
    const pair = this.pair
    if (pair === null || this.rubric === null) return
    const progress = await this.client.progress(this.raterId)
    this.root.innerHTML = ''

    const header = el('div', 'progress')
    header.textContent = `${progress.rated}/${progress.assigned}`
    this.root.appendChild(header)

    const section = el('section', 'pair')
    section.appendChild(textEl('h2', 'pair-title', pair.title))
    section.appendChild(textEl('p', 'pair-body', pair.body))
    section.appendChild(textEl('blockquote', 'pair-answer', pair.answer))
    this.root.appendChild(section)

    this.root.appendChild(this.buildForm())
    this.root.appendChild(el('div', 'error-banner'))
    this.refreshSubmit()
  }

  private buildForm(): HTMLFormElement {
    const form = document.createElement('form')
    form.className = 'score-form'
    for (const dim of SCORE_DIMENSIONS) {
      form.appendChild(this.buildDimension(dim))
    }
    const submit = document.createElement('button')
    submit.type = 'button'
    submit.className = 'submit'
    submit.textContent = 'Submit rating'
    submit.addEventListener('click', () => void this.submit())
    form.appendChild(submit)
    return form
  }

  private buildDimension(dim: ScoreDimension): HTMLFieldSetElement {
    const levels = this.rubric?.rubric[dim] ?? []
    const fieldset = document.createElement('fieldset')
    fieldset.className = `dimension dimension-${dim}`
    fieldset.appendChild(textEl('legend', 'dimension-name', dim))
    for (const level of SCORE_LEVELS) {
      const label = el('label', 'level') as HTMLLabelElement
      const input = document.createElement('input')
      input.type = 'radio'
      input.name = dim
      input.value = String(level)
      if (this.form[dim] === level) input.checked = true
      input.addEventListener('change', () => {
        this.form[dim] = level
        this.refreshSubmit()
      })
      label.appendChild(input)
      // Table-style criterion text shown inline next to each selector.
      label.appendChild(textEl('span', 'criterion', `${level}: ${levels[level] ?? ''}`))
      fieldset.appendChild(label)
    }
    return fieldset
  }

  private refreshSubmit(): void {
    const submit = this.root.querySelector<HTMLButtonElement>('button.submit')
    if (submit) submit.disabled = !formComplete(this.form)
  }

  private async submit(): Promise<void> {
    const pair = this.pair
    if (pair === null || !formComplete(this.form)) return
    try {
      await this.client.submitRating({
        pair_id: pair.pair_id,
        rater_id: this.raterId,
        alignment: this.form.alignment as number,
        accuracy: this.form.accuracy as number,
        readability: this.form.readability as number,
        confidence: this.form.confidence as number,
      })
      await this.loadNext()
    } catch (err) {
      // 422 and network failures keep the selected scores on screen.
      if (err instanceof ApiError) {
        this.showBanner(err.detail)
      } else {
        this.renderRetryPrompt()
      }
    }
  }

  private showBanner(message: string): void {
    const banner = this.root.querySelector('.error-banner')
    if (banner) banner.textContent = message
  }

  private renderRetryPrompt(): void {
    const banner = this.root.querySelector('.error-banner')
    if (banner === null || banner.querySelector('button.retry')) return
    banner.textContent = 'Network error — your scores are kept. '
    const retry = document.createElement('button')
    retry.type = 'button'
    retry.className = 'retry'
    retry.textContent = 'Retry'
    retry.addEventListener('click', () => {
      banner.textContent = ''
      void this.submit()
    })
    banner.appendChild(retry)
  }

  private renderDone(): void {
    this.root.innerHTML = ''
    const done = el('div', 'done')
    done.textContent = 'All assigned pairs rated. Thank you!'
    this.root.appendChild(done)
  }

  private renderError(err: unknown, retry: () => void): void {
    this.root.innerHTML = ''
    const banner = el('div', 'error-banner')
    banner.textContent =
      err instanceof ApiError ? err.detail : 'Could not reach the study server.'
    const button = document.createElement('button')
    button.type = 'button'
    button.className = 'retry'
    button.textContent = 'Retry'
    button.addEventListener('click', retry)
    banner.appendChild(button)
    this.root.appendChild(banner)
  }

  /** Test hook: current form selections. */
  currentForm(): ScoreForm {
    return { ...this.form }
  }
}

function el(tag: string, className: string): HTMLElement {
  const node = document.createElement(tag)
  node.className = className
  return node
}

function textEl(tag: string, className: string, text: string): HTMLElement {
  const node = el(tag, className)
  node.textContent = text
  return node
}
