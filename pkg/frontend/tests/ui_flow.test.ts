// Scripted browser flow (criterion: select study, presence ask with red
// highlights and <= 4 scored answers, location follow-up, ordered
// history, reload reproducing the display from GET /sessions/{id}).

import { beforeEach, describe, expect, it, vi } from 'vitest'

import { boot } from '../src/main'
import { FakeService, LOCATION_ANSWER, PRESENCE_ANSWER, STUDY_A } from './fake_service'

let service: FakeService

function mount(): HTMLElement {
  const root = document.createElement('div')
  root.id = 'app'
  document.body.replaceChildren(root)
  return root
}

async function flush(): Promise<void> {
  for (let i = 0; i < 8; i += 1) {
    await new Promise((resolve) => setTimeout(resolve, 0))
  }
}

function select(root: HTMLElement, selector: string): HTMLElement {
  const node = root.querySelector(selector)
  if (!node) throw new Error(`missing ${selector}`)
  return node as HTMLElement
}

async function pickStudy(root: HTMLElement, studyId: string): Promise<void> {
  const picker = select(root, '#study-select') as HTMLSelectElement
  picker.value = studyId
  picker.dispatchEvent(new Event('change', { bubbles: true }))
  await flush()
}

async function ask(root: HTMLElement, question: string): Promise<void> {
  const input = select(root, '#question-input') as HTMLInputElement
  input.value = question
  select(root, '#ask-button').click()
  await flush()
}

function activatedChips(root: HTMLElement): number[] {
  return [...root.querySelectorAll('.roi-chip.activated')].map((el) =>
    Number((el as HTMLElement).dataset.roiIndex),
  )
}

beforeEach(() => {
  service = new FakeService()
  vi.stubGlobal('fetch', service.fetch)
  window.location.hash = ''
})

describe('diagnosis flow', () => {
  it('runs the coarse-to-fine loop and survives a reload', async () => {
    const root = mount()
    await boot(root)
    const options = [...root.querySelectorAll('#study-select option')].map(
      (o) => (o as HTMLOptionElement).value,
    )
    expect(options).toContain(STUDY_A.study_id)

    await pickStudy(root, STUDY_A.study_id)
    expect(root.querySelectorAll('.roi-chip').length).toBe(STUDY_A.n)
    expect(activatedChips(root)).toEqual([])

    // presence question: red highlights + at most four scored answers
    await ask(root, 'is there cardiomegaly?')
    expect(activatedChips(root).sort()).toEqual(
      [...PRESENCE_ANSWER.activated_rois.implicit].sort(),
    )
    const answers = [...root.querySelectorAll('.answer-chip')].map((el) => el.textContent ?? '')
    expect(answers.length).toBeLessThanOrEqual(4)
    expect(answers[0]).toContain('yes')
    expect(answers.every((text) => Number(text.match(/\((.+)\)/)![1]) > 0.04)).toBe(true)

    // location follow-up appends a second ordered card
    await ask(root, 'where is the atelectasis?')
    const cards = [...root.querySelectorAll('.turn-card')]
    expect(cards.length).toBe(2)
    expect(cards.map((c) => (c as HTMLElement).dataset.turnIndex)).toEqual(['0', '1'])
    expect(select(root, '.turn-card[data-turn-index="0"] .turn-question').textContent).toContain(
      'is there cardiomegaly?',
    )
    expect(select(root, '.turn-card[data-turn-index="1"] .turn-question').textContent).toContain(
      'where is the atelectasis?',
    )
    expect(activatedChips(root).sort()).toEqual(
      [...LOCATION_ANSWER.activated_rois.implicit].sort(),
    )

    // reload: a fresh boot restores the display from GET /sessions/{id}
    const sessionId = window.location.hash.replace('#s=', '')
    expect(service.sessions.get(sessionId)?.turns.length).toBe(2)
    const reloaded = mount()
    await boot(reloaded)
    await flush()
    const reloadedCards = [...reloaded.querySelectorAll('.turn-card')]
    expect(reloadedCards.length).toBe(2)
    expect(reloadedCards.map((c) => (c as HTMLElement).dataset.turnIndex)).toEqual(['0', '1'])
    expect(activatedChips(reloaded).sort()).toEqual(
      [...LOCATION_ANSWER.activated_rois.implicit].sort(),
    )
    expect((select(reloaded, '#study-select') as HTMLSelectElement).value).toBe(STUDY_A.study_id)
  })

  it('switches modality tabs and re-highlights past turns', async () => {
    const root = mount()
    await boot(root)
    await pickStudy(root, STUDY_A.study_id)
    await ask(root, 'is there cardiomegaly?')
    await ask(root, 'where is the atelectasis?')

    ;(select(root, '.tab[data-tab="spatial"]')).click()
    await flush()
    expect(activatedChips(root).sort()).toEqual(
      [...LOCATION_ANSWER.activated_rois.spatial].sort(),
    )
    expect(select(root, '.tab[data-tab="spatial"]').className).toContain('selected')

    ;(select(root, '.rehighlight[data-turn-index="0"]')).click()
    await flush()
    expect(activatedChips(root).sort()).toEqual(
      [...PRESENCE_ANSWER.activated_rois.spatial].sort(),
    )
  })

  it('template picker composes in-vocabulary questions', async () => {
    const root = mount()
    await boot(root)
    await pickStudy(root, STUDY_A.study_id)
    const picker = select(root, '#template-select') as HTMLSelectElement
    picker.value = 'presence-is'
    picker.dispatchEvent(new Event('change', { bubbles: true }))
    await flush()
    const slot = select(root, '.slot-select') as HTMLSelectElement
    expect([...slot.options].map((o) => o.value)).toContain('cardiomegaly')
    slot.value = 'pleural effusion'
    slot.dispatchEvent(new Event('change', { bubbles: true }))
    await flush()
    expect((select(root, '#question-input') as HTMLInputElement).value).toBe(
      'is there pleural effusion?',
    )
  })

  it('a failed ask shows a retryable error and never mutates history', async () => {
    const root = mount()
    await boot(root)
    await pickStudy(root, STUDY_A.study_id)
    await ask(root, 'is there cardiomegaly?')
    service.failNextAsk = true
    await ask(root, 'where is the atelectasis?')
    expect(root.querySelectorAll('.turn-card').length).toBe(1)
    expect(select(root, '#status').textContent).toContain('retry')
    // the same ask succeeds afterwards
    await ask(root, 'where is the atelectasis?')
    expect(root.querySelectorAll('.turn-card').length).toBe(2)
    expect(select(root, '#status').textContent).toBe('')
  })
})
