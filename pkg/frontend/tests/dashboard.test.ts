import { beforeEach, describe, expect, it } from 'vitest'

import { StudyClient } from '../src/api.js'
import { SeniorDashboard } from '../src/dashboard.js'
import { seededServer, type MockStudyServer } from './mock-server.js'

let server: MockStudyServer
let root: HTMLElement

beforeEach(() => {
  server = seededServer()
  root = document.createElement('div')
  document.body.innerHTML = ''
  document.body.appendChild(root)
})

function dashboard() {
  return new SeniorDashboard(root, new StudyClient('', server.fetch), 'senior')
}

async function rate(pid: string, rid: string, confidence: number, score = 2) {
  const resp = await server.fetch('/api/rating', {
    method: 'POST',
    body: JSON.stringify({
      pair_id: pid, rater_id: rid,
      alignment: score, accuracy: score, readability: score, confidence,
    }),
  })
  expect(resp.status).toBe(201)
}

describe('SeniorDashboard', () => {
  it('renders alpha per dimension and pairwise tau once ratings exist', async () => {
    for (const rid of ['r1', 'r2']) await rate('p0', rid, 3)
    await dashboard().refresh()
    const rows = root.querySelectorAll('.alpha-table .alpha-row')
    expect(rows).toHaveLength(4)
    expect(root.querySelector('.alpha-alignment')?.textContent).toContain('1.000')
    expect(root.querySelector('.tau-table')?.textContent).toContain('r1|r2')
  })

  it('shows a placeholder when nothing needs adjudication', async () => {
    await rate('p0', 'r1', 3)
    await dashboard().refresh()
    expect(root.querySelector('.adjudication-queue')?.textContent).toBe(
      'no adjudications pending',
    )
  })

  it('round-trips an adjudication: queued row disappears after submit', async () => {
    await rate('p0', 'r1', 0)
    await rate('p1', 'r2', 1)
    const dash = dashboard()
    await dash.refresh()
    let rows = root.querySelectorAll<HTMLElement>('.queue-row')
    expect(rows).toHaveLength(2)
    const first = rows[0]!
    expect(first.dataset.pairId).toBe('p0')
    for (const dim of ['alignment', 'accuracy', 'readability', 'confidence']) {
      first.querySelector<HTMLInputElement>(`.adjudicate-${dim}`)!.value = '3'
    }
    first.querySelector<HTMLButtonElement>('.adjudicate-submit')!.click()
    await new Promise((r) => setTimeout(r, 0))
    await new Promise((r) => setTimeout(r, 0))
    rows = root.querySelectorAll<HTMLElement>('.queue-row')
    expect(rows).toHaveLength(1)
    expect(rows[0]!.dataset.pairId).toBe('p1')
  })

  it('keeps the dashboard free of model tags', async () => {
    for (const rid of ['r1', 'r2']) await rate('p0', rid, 1)
    await dashboard().refresh()
    expect(document.body.innerHTML).not.toContain('secret-model')
    expect(server.networkLog.join('')).not.toContain('secret-model')
  })
})
