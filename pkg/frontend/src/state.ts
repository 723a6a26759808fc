// Pure application state: everything the DOM shows derives from
// (study detail, ordered turns, selected modality tab, selected turn).

import type {
  AskResponse,
  Modality,
  ScoredAnswer,
  SessionTurn,
  SessionView,
  StudyDetail,
} from './types'

export const MODALITIES: Modality[] = ['implicit', 'spatial', 'semantic']
export const SCORE_FLOOR = 0.04
export const MAX_ANSWERS = 4

export interface UiTurn {
  index: number
  question: string
  answers: ScoredAnswer[]
  activated: Record<Modality, number[]>
}

export interface AppState {
  study: StudyDetail | null
  sessionId: string | null
  turns: UiTurn[]
  tab: Modality
  // which turn's activations are highlighted; null = latest
  highlightTurn: number | null
  pendingAsk: boolean
  error: string | null
}

export function initialState(): AppState {
  return {
    study: null,
    sessionId: null,
    turns: [],
    tab: 'implicit',
    highlightTurn: null,
    pendingAsk: false,
    error: null,
  }
}

export function displayedAnswers(answers: ScoredAnswer[]): ScoredAnswer[] {
  return answers
    .filter((a) => a.score > SCORE_FLOOR)
    .sort((a, b) => b.score - a.score)
    .slice(0, MAX_ANSWERS)
}

function toUiTurn(turn: AskResponse | SessionTurn): UiTurn {
  return {
    index: turn.turn_index,
    question: turn.question,
    answers: displayedAnswers(turn.top_answers),
    activated: turn.activated_rois,
  }
}

export function withStudy(state: AppState, study: StudyDetail, sessionId: string): AppState {
  return {
    ...initialState(),
    study,
    sessionId,
    tab: state.tab,
  }
}

export function applyAsk(state: AppState, response: AskResponse): AppState {
  return {
    ...state,
    turns: [...state.turns, toUiTurn(response)],
    highlightTurn: null,
    pendingAsk: false,
    error: null,
  }
}

export function fromSession(state: AppState, study: StudyDetail, session: SessionView): AppState {
  // replaying GET /sessions/{id} after a reload reproduces the display
  return {
    ...initialState(),
    study,
    sessionId: session.session_id,
    turns: session.turns.map(toUiTurn),
    tab: state.tab,
  }
}

export function selectTab(state: AppState, tab: Modality): AppState {
  return { ...state, tab }
}

export function reHighlight(state: AppState, turnIndex: number): AppState {
  return { ...state, highlightTurn: turnIndex }
}

export function activeTurn(state: AppState): UiTurn | null {
  if (!state.turns.length) return null
  if (state.highlightTurn === null) return state.turns[state.turns.length - 1]
  return state.turns.find((t) => t.index === state.highlightTurn) ?? null
}

export function activatedSet(state: AppState): Set<number> {
  const turn = activeTurn(state)
  if (!turn) return new Set()
  return new Set(turn.activated[state.tab] ?? [])
}

// ---------------------------------------------------------------------------
// box scaling
// ---------------------------------------------------------------------------

export interface PixelBox {
  index: number
  label: string
  x: number
  y: number
  w: number
  h: number
  activated: boolean
}

export function pixelBoxes(
  state: AppState,
  canvasWidth: number,
  canvasHeight: number,
): PixelBox[] {
  if (!state.study) return []
  const active = activatedSet(state)
  return state.study.boxes.map(([x, y, w, h], index) => ({
    index,
    label: state.study!.class_names[index],
    x: x * canvasWidth,
    y: y * canvasHeight,
    w: w * canvasWidth,
    h: h * canvasHeight,
    activated: active.has(index),
  }))
}

export function toNormalized(
  box: PixelBox,
  canvasWidth: number,
  canvasHeight: number,
): [number, number, number, number] {
  return [box.x / canvasWidth, box.y / canvasHeight, box.w / canvasWidth, box.h / canvasHeight]
}
