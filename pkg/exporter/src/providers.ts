/**
 * Model provider interfaces and deterministic stand-ins.
 *
 * Real deployments implement DepthBackbone / CaptionModel / TextEncoder
 * against actual checkpoints (ONNX runtime, a local inference server, ...).
 * The stub providers below are seeded from the image bytes, so exports are
 * reproducible end to end without any model weights; they exist for dry
 * runs and for conformance-testing the file contract.
 */

export interface PyramidLevel {
  channels: number
  height: number
  width: number
  data: Float64Array // C order (c, h, w)
}

export interface BackbonePrediction {
  inverseDepth: Float64Array // (height * width), row-major
  pyramid: PyramidLevel[] // 4 levels at strides 4, 8, 16, 32
}

export interface DepthBackbone {
  readonly id: string
  readonly pyramidChannels: [number, number, number, number]
  predict(image: Buffer, height: number, width: number): BackbonePrediction
}

export interface CaptionModel {
  readonly id: string
  caption(image: Buffer, template: string, deterministic: boolean): string
}

export interface TextEncoder {
  readonly id: string
  readonly dim: number
  encode(caption: string): Float64Array
}

// ---------------------------------------------------------------------------
// Seeded deterministic stand-ins
// ---------------------------------------------------------------------------

export function fnv1a(bytes: Buffer | string): number {
  const buf = typeof bytes === 'string' ? Buffer.from(bytes, 'utf-8') : bytes
  let h = 0x811c9dc5
  for (let i = 0; i < buf.length; i++) {
    h ^= buf[i]
    h = Math.imul(h, 0x01000193) >>> 0
  }
  return h >>> 0
}

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** Smooth positive field in [0.05, 1] from random cosine waves. */
export function waveField(rand: () => number, height: number, width: number): Float64Array {
  const out = new Float64Array(height * width)
  const waves = 6
  const params: number[][] = []
  for (let w = 0; w < waves; w++) {
    params.push([0.5 + rand(), rand() * 6 - 3, rand() * 6 - 3, rand() * 2 * Math.PI])
  }
  let lo = Infinity
  let hi = -Infinity
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      let v = 0
      for (const [amp, fy, fx, phase] of params) {
        v += amp * Math.cos(2 * Math.PI * ((fy * y) / height + (fx * x) / width) + phase)
      }
      out[y * width + x] = v
      if (v < lo) lo = v
      if (v > hi) hi = v
    }
  }
  const span = hi - lo || 1
  for (let i = 0; i < out.length; i++) out[i] = 0.05 + (0.95 * (out[i] - lo)) / span
  return out
}

export class StubBackbone implements DepthBackbone {
  readonly id = 'stub-relative-depth'
  readonly pyramidChannels: [number, number, number, number]

  constructor(channels: [number, number, number, number] = [2, 2, 2, 2]) {
    this.pyramidChannels = channels
  }

  predict(image: Buffer, height: number, width: number): BackbonePrediction {
    const rand = mulberry32(fnv1a(image))
    const inverseDepth = waveField(rand, height, width)
    const pyramid: PyramidLevel[] = this.pyramidChannels.map((channels, level) => {
      const stride = 4 * 2 ** level
      const h = Math.max(1, Math.floor(height / stride))
      const w = Math.max(1, Math.floor(width / stride))
      const data = new Float64Array(channels * h * w)
      for (let i = 0; i < data.length; i++) data[i] = rand() * 2 - 1
      return { channels, height: h, width: w, data }
    })
    return { inverseDepth, pyramid }
  }
}

export class StubCaptioner implements CaptionModel {
  constructor(readonly id: string) {}

  caption(image: Buffer, template: string, deterministic: boolean): string {
    const seed = fnv1a(Buffer.concat([image, Buffer.from(this.id + template)]))
    const rand = mulberry32(seed)
    const scenes = ['a cluttered office', 'a narrow corridor', 'an open street', 'a small bedroom']
    const objects = ['a desk and chairs', 'parked cars', 'shelves of books', 'a doorway']
    const pick = (xs: string[]) => xs[Math.floor((deterministic ? 0.0 : rand()) * xs.length)]
    return `${template} ${pick(scenes)} with ${pick(objects)}.`.trim()
  }
}

export class StubTextEncoder implements TextEncoder {
  readonly id = 'stub-text-encoder'

  constructor(readonly dim: number = 32) {}

  encode(caption: string): Float64Array {
    const rand = mulberry32(fnv1a(caption))
    const out = new Float64Array(this.dim)
    for (let i = 0; i < this.dim; i++) {
      // Box-Muller; embeddings stored unnormalized (header flag says so)
      const u = Math.max(rand(), 1e-12)
      out[i] = Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * rand())
    }
    return out
  }
}
