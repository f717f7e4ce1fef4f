/**
 * Caption protocol: K captions per image from several checkpoints and
 * prompt templates. The default layout is 15 = 2 checkpoints x 5 templates
 * + 5 repeats of the fixed template with deterministic decoding; the fixed
 * template always produces caption 0, which evaluation uses.
 */

import type { CaptionModel } from './providers.js'

export const PROMPT_TEMPLATES = [
  'Describe the scene in one sentence:',
  'In one sentence, what is shown here?',
  'Summarize this image briefly:',
  'What does this photo depict?',
  'Give a short description of',
]

export const FIXED_TEMPLATE = PROMPT_TEMPLATES[0]

export interface CaptionResult {
  captions: string[]
  flagged: number[] // indices where generation failed and a placeholder went in
}

export function generateCaptions(
  image: Buffer,
  captioners: CaptionModel[],
  k: number,
): CaptionResult {
  const captions: string[] = []
  const flagged: number[] = []

  const emit = (model: CaptionModel, template: string, deterministic: boolean) => {
    if (captions.length >= k) return
    let text = ''
    try {
      text = model.caption(image, template, deterministic)
    } catch {
      text = ''
    }
    if (!text.trim()) {
      flagged.push(captions.length)
      text = '[caption unavailable]'
    }
    captions.push(text)
  }

  // caption 0: fixed template, deterministic decoding, first checkpoint
  emit(captioners[0], FIXED_TEMPLATE, true)
  for (const model of captioners) {
    for (const template of PROMPT_TEMPLATES) {
      if (model === captioners[0] && template === FIXED_TEMPLATE) continue
      emit(model, template, false)
    }
  }
  // pad with fixed-template repeats (varied decoding seed via index suffix)
  let repeat = 0
  while (captions.length < k) {
    emit(captioners[repeat % captioners.length], `${FIXED_TEMPLATE} (take ${repeat + 2})`, false)
    repeat++
  }
  return { captions: captions.slice(0, k), flagged }
}
