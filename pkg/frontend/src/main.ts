// App wiring: study picker, ask flow with template picker, modality
// tabs, and the session timeline. All scores come from the service; the
// client never infers anything locally.

import { api } from './api'
import { Dom, render } from './render'
import {
  AppState,
  applyAsk,
  fromSession,
  initialState,
  reHighlight,
  selectTab,
  withStudy,
} from './state'
import { fillTemplate, slotNames, slotOptions, TEMPLATES, Template } from './templates'
import type { LexiconExport, Modality } from './types'

interface App {
  state: AppState
  dom: Dom & {
    root: HTMLElement
    studySelect: HTMLSelectElement
    questionInput: HTMLInputElement
    askButton: HTMLButtonElement
    templateSelect: HTMLSelectElement
    slotBar: HTMLElement
  }
  lexicon: LexiconExport | null
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = '',
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag)
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value)
  if (text) node.textContent = text
  return node
}

function buildSkeleton(root: HTMLElement): App['dom'] {
  root.replaceChildren()
  const header = el('header')
  const studySelect = el('select', { id: 'study-select' })
  studySelect.append(el('option', { value: '' }, 'select a study…'))
  header.append(el('span', { class: 'brand' }, 'chest x-ray diagnosis workbench'), studySelect)

  const viewer = el('section', { id: 'viewer' })
  const canvas = el('canvas', { id: 'roi-canvas', width: '640', height: '640' })
  const tabBar = el('nav', { id: 'tab-bar' })
  const boxList = el('div', { id: 'box-list' })
  viewer.append(canvas, tabBar, boxList)

  const askPanel = el('section', { id: 'ask-panel' })
  const templateSelect = el('select', { id: 'template-select' })
  templateSelect.append(el('option', { value: '' }, 'question templates…'))
  for (const template of TEMPLATES) {
    templateSelect.append(el('option', { value: template.id }, template.text))
  }
  const slotBar = el('div', { id: 'slot-bar' })
  const questionInput = el('input', {
    id: 'question-input',
    type: 'text',
    placeholder: 'ask about the image…',
  })
  const askButton = el('button', { id: 'ask-button' }, 'ask')
  const status = el('div', { id: 'status', class: 'status' })
  const answers = el('div', { id: 'answers' })
  askPanel.append(templateSelect, slotBar, questionInput, askButton, status, answers)

  const timeline = el('section', { id: 'timeline' })

  root.append(header, viewer, askPanel, timeline)
  return {
    root,
    canvas,
    boxList,
    tabBar,
    answers,
    timeline,
    status,
    studySelect,
    questionInput,
    askButton,
    templateSelect,
    slotBar,
  }
}

function sessionFromHash(): string | null {
  const match = window.location.hash.match(/#s=([A-Za-z0-9:-]+)/)
  return match ? match[1] : null
}

function renderSlots(app: App, template: Template): void {
  app.dom.slotBar.replaceChildren()
  if (!app.lexicon) return
  for (const slot of slotNames(template)) {
    const select = el('select', { class: 'slot-select', 'data-slot': slot })
    for (const option of slotOptions(slot, app.lexicon)) {
      select.append(el('option', { value: option }, option))
    }
    app.dom.slotBar.append(select)
  }
  syncTemplateIntoInput(app, template)
}

function syncTemplateIntoInput(app: App, template: Template): void {
  const values: Record<string, string> = {}
  app.dom.slotBar.querySelectorAll<HTMLSelectElement>('select.slot-select').forEach((select) => {
    values[select.dataset.slot ?? ''] = select.value
  })
  app.dom.questionInput.value = fillTemplate(template, values)
}

async function selectStudy(app: App, studyId: string): Promise<void> {
  const study = await api.getStudy(studyId)
  const session = await api.createSession(studyId)
  app.state = withStudy(app.state, study, session.session_id)
  window.location.hash = `#s=${session.session_id}`
  render(app.state, app.dom)
}

async function restoreSession(app: App, sessionId: string): Promise<void> {
  const session = await api.getSession(sessionId)
  const study = await api.getStudy(session.study_id)
  app.state = fromSession(app.state, study, session)
  app.dom.studySelect.value = session.study_id
  render(app.state, app.dom)
}

async function submitAsk(app: App): Promise<void> {
  const question = app.dom.questionInput.value.trim()
  const sessionId = app.state.sessionId
  if (!question || !sessionId || app.state.pendingAsk) return
  app.state = { ...app.state, pendingAsk: true, error: null }
  render(app.state, app.dom)
  try {
    const response = await api.ask(sessionId, question)
    app.state = applyAsk(app.state, response)
    app.dom.questionInput.value = ''
  } catch (err) {
    // keep history untouched; the ask can simply be retried
    app.state = {
      ...app.state,
      pendingAsk: false,
      error: `ask failed: ${err instanceof Error ? err.message : String(err)} (retry)`,
    }
  }
  render(app.state, app.dom)
}

export async function boot(root: HTMLElement): Promise<App> {
  const dom = buildSkeleton(root)
  const app: App = { state: initialState(), dom, lexicon: null }

  const [studies, lexicon] = await Promise.all([api.listStudies(), api.getLexicon()])
  app.lexicon = lexicon
  for (const study of studies) {
    dom.studySelect.append(
      el('option', { value: study.study_id }, `${study.study_id} (${study.n} rois)`),
    )
  }

  dom.studySelect.addEventListener('change', () => {
    if (dom.studySelect.value) void selectStudy(app, dom.studySelect.value)
  })
  dom.askButton.addEventListener('click', () => void submitAsk(app))
  dom.questionInput.addEventListener('keydown', (event) => {
    if (event.key === 'Enter') void submitAsk(app)
  })
  dom.templateSelect.addEventListener('change', () => {
    const template = TEMPLATES.find((t) => t.id === dom.templateSelect.value)
    if (template) renderSlots(app, template)
  })
  dom.slotBar.addEventListener('change', () => {
    const template = TEMPLATES.find((t) => t.id === dom.templateSelect.value)
    if (template) syncTemplateIntoInput(app, template)
  })
  dom.tabBar.addEventListener('click', (event) => {
    const target = event.target as HTMLElement
    const tab = target.dataset?.tab as Modality | undefined
    if (tab) {
      app.state = selectTab(app.state, tab)
      render(app.state, app.dom)
    }
  })
  dom.timeline.addEventListener('click', (event) => {
    const target = event.target as HTMLElement
    if (target.classList.contains('rehighlight')) {
      app.state = reHighlight(app.state, Number(target.dataset.turnIndex))
      render(app.state, app.dom)
    }
  })

  const restore = sessionFromHash()
  if (restore) {
    await restoreSession(app, restore)
  } else {
    render(app.state, app.dom)
  }
  return app
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  void boot(document.getElementById('app')!)
}
