import type {
  AskResponse,
  LexiconExport,
  SessionView,
  StudyDetail,
  StudySummary,
} from './types'

const BASE = '/api/v1'

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(`${BASE}${path}`, {
    headers: { 'Content-Type': 'application/json' },
    ...init,
  })
  if (!resp.ok) {
    let message = `${resp.status}`
    try {
      const body = await resp.json()
      message = body.message ?? message
    } catch {
      /* non-JSON error body */
    }
    throw new Error(message)
  }
  return resp.json() as Promise<T>
}

export const api = {
  listStudies: () => request<StudySummary[]>('/studies'),
  getStudy: (id: string) => request<StudyDetail>(`/studies/${id}`),
  createSession: (studyId: string) =>
    request<{ session_id: string; study_id: string }>('/sessions', {
      method: 'POST',
      body: JSON.stringify({ study_id: studyId }),
    }),
  ask: (sessionId: string, question: string) =>
    request<AskResponse>(`/sessions/${sessionId}/ask`, {
      method: 'POST',
      body: JSON.stringify({ question }),
    }),
  getSession: (sessionId: string) => request<SessionView>(`/sessions/${sessionId}`),
  getLexicon: () => request<LexiconExport>('/lexicon'),
}
