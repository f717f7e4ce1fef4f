/**
 * Dataset export: images + ground-truth depth in, depthcal manifest out.
 *
 * Expected input layout:
 *   <root>/images/<id>.<ext>   any image files (bytes are passed to the backbone)
 *   <root>/depth/<id>.npy      metric depth in meters, invalid pixels = 0
 *
 * Per image the exporter writes the inverse relative depth map, the ground
 * truth (re-encoded), K text-embedding vectors (caption 0 comes from the
 * fixed template with deterministic decoding), and either one pooled
 * feature vector (default) or four per-level maps. Images without ground
 * truth are skipped and logged. The manifest (JSON Lines, header first) and
 * all tensors match the depthcal formats byte for byte.
 */

import { promises as fs } from 'fs'
import * as path from 'path'

import { FIXED_TEMPLATE, generateCaptions } from './captions.js'
import { readNpy, writeNpy, type NpyDtype } from './npy.js'
import type { CaptionModel, DepthBackbone, PyramidLevel, TextEncoder } from './providers.js'
import { StubBackbone, StubCaptioner, StubTextEncoder } from './providers.js'

export interface ExportConfig {
  datasetRoot: string
  outDir: string
  datasetName: string
  kCaptions: number
  perLevelFeatures: boolean
  dtype: NpyDtype
  backbone: DepthBackbone
  captioners: CaptionModel[]
  textEncoder: TextEncoder
}

export function defaultConfig(datasetRoot: string, outDir: string): ExportConfig {
  return {
    datasetRoot,
    outDir,
    datasetName: path.basename(datasetRoot) || 'export',
    kCaptions: 15,
    perLevelFeatures: false,
    dtype: '<f4',
    backbone: new StubBackbone(),
    // two checkpoints x five templates + five fixed-template repeats = 15
    captioners: [new StubCaptioner('stub-captioner-a'), new StubCaptioner('stub-captioner-b')],
    textEncoder: new StubTextEncoder(),
  }
}

export interface ExportResult {
  manifestPath: string
  exported: string[]
  skipped: string[] // image ids without ground truth
}

function pool(levels: PyramidLevel[]): Float64Array {
  const total = levels.reduce((a, l) => a + l.channels, 0)
  const out = new Float64Array(total)
  let at = 0
  for (const lvl of levels) {
    const spatial = lvl.height * lvl.width
    for (let c = 0; c < lvl.channels; c++) {
      let sum = 0
      for (let i = 0; i < spatial; i++) sum += lvl.data[c * spatial + i]
      out[at++] = sum / spatial
    }
  }
  return out
}

export async function exportDataset(cfg: ExportConfig): Promise<ExportResult> {
  const imagesDir = path.join(cfg.datasetRoot, 'images')
  const depthDir = path.join(cfg.datasetRoot, 'depth')
  const imageFiles = (await fs.readdir(imagesDir)).sort()
  if (imageFiles.length === 0) throw new Error(`no images found under ${imagesDir}`)
  await fs.mkdir(cfg.outDir, { recursive: true })

  const dFeat = cfg.backbone.pyramidChannels.reduce((a, b) => a + b, 0)
  const records: string[] = []
  const exported: string[] = []
  const skipped: string[] = []

  for (const file of imageFiles) {
    const id = path.parse(file).name
    const gtPath = path.join(depthDir, `${id}.npy`)
    let gt
    try {
      gt = await readNpy(gtPath)
    } catch {
      console.warn(`skipping ${id}: no ground truth at ${gtPath}`)
      skipped.push(id)
      continue
    }
    if (gt.shape.length !== 2) throw new Error(`${gtPath}: ground truth must be 2-D`)
    const [height, width] = gt.shape
    const image = await fs.readFile(path.join(imagesDir, file))

    const prediction = cfg.backbone.predict(image, height, width)
    const { captions, flagged } = generateCaptions(image, cfg.captioners, cfg.kCaptions)
    if (flagged.length > 0) console.warn(`record ${id}: placeholder captions at ${flagged}`)

    const yRel = `${id}_y.npy`
    const gtRel = `${id}_gt.npy`
    await writeNpy(path.join(cfg.outDir, yRel), prediction.inverseDepth, [height, width], cfg.dtype)
    await writeNpy(path.join(cfg.outDir, gtRel), gt.data, gt.shape, cfg.dtype)

    const embRels: string[] = []
    for (let k = 0; k < captions.length; k++) {
      const rel = `${id}_emb${String(k).padStart(2, '0')}.npy`
      const emb = cfg.textEncoder.encode(captions[k])
      await writeNpy(path.join(cfg.outDir, rel), emb, [emb.length], cfg.dtype)
      embRels.push(rel)
    }

    const record: Record<string, unknown> = {
      id,
      y: yRel,
      gt: gtRel,
      text_embs: embRels,
      captions,
    }
    if (cfg.perLevelFeatures) {
      const levelRels: string[] = []
      for (let lvl = 0; lvl < prediction.pyramid.length; lvl++) {
        const p = prediction.pyramid[lvl]
        const rel = `${id}_feat_l${lvl}.npy`
        await writeNpy(path.join(cfg.outDir, rel), p.data, [p.channels, p.height, p.width], cfg.dtype)
        levelRels.push(rel)
      }
      record.feat_levels = levelRels
    } else {
      const pooled = pool(prediction.pyramid)
      const rel = `${id}_feat.npy`
      await writeNpy(path.join(cfg.outDir, rel), pooled, [pooled.length], cfg.dtype)
      record.feat = rel
    }
    records.push(JSON.stringify(record))
    exported.push(id)
  }

  if (exported.length === 0) throw new Error('no records exported (all images lacked ground truth)')

  const header: Record<string, unknown> = {
    type: 'header',
    d_text: cfg.textEncoder.dim,
    d_feat: dFeat,
    dataset: cfg.datasetName,
    embedding_normalized: false,
    backbone: cfg.backbone.id,
    text_encoder: cfg.textEncoder.id,
    captioners: cfg.captioners.map((c) => c.id),
    fixed_template: FIXED_TEMPLATE,
    pyramid_strides: [4, 8, 16, 32],
    pyramid_channels: cfg.backbone.pyramidChannels,
  }
  if (cfg.perLevelFeatures) header.channels = cfg.backbone.pyramidChannels
  const manifestPath = path.join(cfg.outDir, 'manifest.jsonl')
  await fs.writeFile(manifestPath, [JSON.stringify(header), ...records].join('\n') + '\n', 'utf-8')
  return { manifestPath, exported, skipped }
}
