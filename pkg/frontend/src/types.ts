// Wire types for the /api/v1 contract.

export interface StudySummary {
  study_id: string
  image_id: string
  n: number
  class_names: string[]
}

export interface StudyDetail {
  study_id: string
  image_id: string
  n: number
  boxes: [number, number, number, number][]
  class_names: string[]
  image_ref: string | null
}

export interface ScoredAnswer {
  label: string
  score: number
}

export type Modality = 'implicit' | 'spatial' | 'semantic'

export type ActivatedRois = Record<Modality, number[]>

export interface AskResponse {
  turn_index: number
  question: string
  top_answers: ScoredAnswer[]
  activated_rois: ActivatedRois
}

export interface SessionTurn {
  turn_index: number
  question: string
  top_answers: ScoredAnswer[]
  activated_rois: ActivatedRois
  timestamp: number
}

export interface SessionView {
  session_id: string
  study_id: string
  turns: SessionTurn[]
}

export interface LexiconExport {
  abnormalities: string[]
  levels: string[]
  locations_pre: string[]
  locations_post: string[]
  types: string[]
}

export interface ApiError {
  code: string
  message: string
}
