// DOM + canvas rendering; a pure projection of AppState.

import {
  activeTurn,
  AppState,
  MODALITIES,
  pixelBoxes,
  PixelBox,
} from './state'

export const NEUTRAL_STYLE = { color: '#6c8ebf', width: 1.5 }
export const ACTIVATED_STYLE = { color: '#d0342c', width: 3 }

export interface Dom {
  canvas: HTMLCanvasElement
  boxList: HTMLElement
  tabBar: HTMLElement
  answers: HTMLElement
  timeline: HTMLElement
  status: HTMLElement
}

export function drawBoxes(canvas: HTMLCanvasElement, boxes: PixelBox[]): void {
  let ctx: CanvasRenderingContext2D | null = null
  try {
    ctx = canvas.getContext('2d')
  } catch {
    return // jsdom test environment has no 2d context
  }
  if (!ctx) return
  ctx.clearRect(0, 0, canvas.width, canvas.height)
  ctx.fillStyle = '#1e1e24'
  ctx.fillRect(0, 0, canvas.width, canvas.height)
  for (const box of boxes) {
    const style = box.activated ? ACTIVATED_STYLE : NEUTRAL_STYLE
    ctx.strokeStyle = style.color
    ctx.lineWidth = style.width
    ctx.strokeRect(box.x, box.y, box.w, box.h)
    ctx.fillStyle = style.color
    ctx.font = '11px sans-serif'
    ctx.fillText(box.label, box.x + 2, Math.max(10, box.y - 3))
  }
}

export function render(state: AppState, dom: Dom): void {
  const boxes = pixelBoxes(state, dom.canvas.width, dom.canvas.height)
  drawBoxes(dom.canvas, boxes)

  // a DOM mirror of the canvas content keeps the overlay scriptable
  dom.boxList.replaceChildren(
    ...boxes.map((box) => {
      const el = document.createElement('div')
      el.className = box.activated ? 'roi-chip activated' : 'roi-chip'
      el.dataset.roiIndex = String(box.index)
      el.dataset.x = box.x.toFixed(1)
      el.dataset.y = box.y.toFixed(1)
      el.textContent = `${box.index}: ${box.label}`
      return el
    }),
  )

  dom.tabBar.replaceChildren(
    ...MODALITIES.map((modality) => {
      const el = document.createElement('button')
      el.className = modality === state.tab ? 'tab selected' : 'tab'
      el.dataset.tab = modality
      el.textContent = modality
      return el
    }),
  )

  const turn = activeTurn(state)
  dom.answers.replaceChildren(
    ...(turn ? turn.answers : []).map((answer) => {
      const el = document.createElement('span')
      el.className = 'answer-chip'
      el.textContent = `${answer.label} (${answer.score.toFixed(3)})`
      return el
    }),
  )

  dom.timeline.replaceChildren(
    ...state.turns.map((t) => {
      const card = document.createElement('article')
      card.className = 'turn-card'
      card.dataset.turnIndex = String(t.index)
      const q = document.createElement('p')
      q.className = 'turn-question'
      q.textContent = `${t.index + 1}. ${t.question}`
      const answers = document.createElement('p')
      answers.className = 'turn-answers'
      answers.textContent = t.answers.map((a) => `${a.label} ${a.score.toFixed(3)}`).join(', ')
      const button = document.createElement('button')
      button.className = 'rehighlight'
      button.dataset.turnIndex = String(t.index)
      button.textContent = 're-highlight'
      card.append(q, answers, button)
      return card
    }),
  )

  if (state.error) {
    dom.status.textContent = state.error
    dom.status.className = 'status error'
  } else if (state.pendingAsk) {
    dom.status.textContent = 'asking…'
    dom.status.className = 'status busy'
  } else {
    dom.status.textContent = ''
    dom.status.className = 'status'
  }
}
