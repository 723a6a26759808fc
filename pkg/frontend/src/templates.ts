// Question skeletons with fillable slots; slot options come from the
// lexicon export so composed questions stay in-vocabulary.

import type { LexiconExport } from './types'

export interface Template {
  id: string
  family: string
  text: string // slots written as <abnormality>, <location>
}

export const TEMPLATES: Template[] = [
  { id: 'abn-all', family: 'abnormality', text: 'what abnormalities are seen in the image?' },
  { id: 'abn-normal', family: 'abnormality', text: 'is this image normal?' },
  { id: 'abn-any', family: 'abnormality', text: 'is there any evidence of any abnormalities?' },
  { id: 'presence-any', family: 'presence', text: 'any evidence of <abnormality>?' },
  { id: 'presence-is', family: 'presence', text: 'is there <abnormality>?' },
  { id: 'presence-loc', family: 'presence', text: 'is there <abnormality> in <location>?' },
  { id: 'view-which', family: 'view', text: 'which view is this image taken?' },
  { id: 'view-pa', family: 'view', text: 'is this pa view?' },
  { id: 'view-ap', family: 'view', text: 'is this ap view?' },
  { id: 'loc-where', family: 'location', text: 'where is the <abnormality>?' },
  { id: 'loc-side-left', family: 'location', text: 'is the <abnormality> located on the left?' },
  { id: 'loc-side-right', family: 'location', text: 'is the <abnormality> located on the right?' },
  { id: 'loc-in', family: 'location', text: 'is the <abnormality> in <location>?' },
  { id: 'level-what', family: 'level', text: 'what level is the <abnormality>?' },
  { id: 'type-what', family: 'type', text: 'what type is the <abnormality>?' },
]

export function slotNames(template: Template): string[] {
  return [...template.text.matchAll(/<([a-z]+)>/g)].map((m) => m[1])
}

export function slotOptions(slot: string, lexicon: LexiconExport): string[] {
  if (slot === 'abnormality') return lexicon.abnormalities
  if (slot === 'location') return lexicon.locations_post
  return []
}

export function fillTemplate(template: Template, values: Record<string, string>): string {
  return template.text.replace(/<([a-z]+)>/g, (_whole, slot: string) => values[slot] ?? `<${slot}>`)
}
