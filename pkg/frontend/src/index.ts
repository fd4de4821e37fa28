// Entry point: a login strip with an opaque rater-id field, then either the
// rater workflow or (for ids entered in the senior box) the dashboard.

import { StudyClient } from './api.js'
import { RaterApp } from './app.js'
import { SeniorDashboard } from './dashboard.js'

export function mount(root: HTMLElement): void {
  const client = new StudyClient()
  root.innerHTML = `
    <div class="login">
      <input class="rater-id" placeholder="rater id" />
      <button type="button" class="start-rating">Start rating</button>
      <input class="senior-id" placeholder="senior id" />
      <button type="button" class="open-dashboard">Dashboard</button>
    </div>
    <main class="view"></main>
  `
  const view = root.querySelector<HTMLElement>('.view')!
  root.querySelector('.start-rating')!.addEventListener('click', () => {
    const raterId = root.querySelector<HTMLInputElement>('.rater-id')!.value.trim()
    if (raterId) void new RaterApp(view, client, raterId).start()
  })
  root.querySelector('.open-dashboard')!.addEventListener('click', () => {
    const seniorId = root.querySelector<HTMLInputElement>('.senior-id')!.value.trim()
    if (seniorId) void new SeniorDashboard(view, client, seniorId).refresh()
  })
}

if (typeof document !== 'undefined') {
  const root = document.getElementById('app')
  if (root) mount(root)
}
