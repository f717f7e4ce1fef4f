#!/usr/bin/env node
/**
 * depthcal-export --root <dataset> --out <dir> [--k 15] [--per-level]
 *                 [--f8] [--name <dataset name>] [--d-text 32]
 *
 * Runs the configured providers over <dataset>/images + <dataset>/depth and
 * writes a depthcal manifest into <dir>. Ships with deterministic stub
 * providers; real model backends implement the interfaces in providers.ts.
 */

import { defaultConfig, exportDataset } from './export.js'
import { StubTextEncoder } from './providers.js'

function parseArgs(argv: string[]): Map<string, string | boolean> {
  const out = new Map<string, string | boolean>()
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]
    if (!arg.startsWith('--')) throw new Error(`unexpected argument: ${arg}`)
    const key = arg.slice(2)
    if (key === 'per-level' || key === 'f8') {
      out.set(key, true)
    } else {
      const value = argv[++i]
      if (value === undefined) throw new Error(`missing value for --${key}`)
      out.set(key, value)
    }
  }
  return out
}

async function main(): Promise<number> {
  let args: Map<string, string | boolean>
  try {
    args = parseArgs(process.argv.slice(2))
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    return 1
  }
  const root = args.get('root')
  const out = args.get('out')
  if (typeof root !== 'string' || typeof out !== 'string') {
    console.error('usage: depthcal-export --root <dataset> --out <dir> [--k N] [--per-level] [--f8]')
    return 1
  }
  const cfg = defaultConfig(root, out)
  if (args.has('k')) cfg.kCaptions = Number(args.get('k'))
  if (args.has('name')) cfg.datasetName = String(args.get('name'))
  if (args.has('d-text')) cfg.textEncoder = new StubTextEncoder(Number(args.get('d-text')))
  if (args.get('per-level') === true) cfg.perLevelFeatures = true
  if (args.get('f8') === true) cfg.dtype = '<f8'
  if (!Number.isInteger(cfg.kCaptions) || cfg.kCaptions < 1) {
    console.error('error: --k must be a positive integer')
    return 1
  }
  try {
    const result = await exportDataset(cfg)
    console.log(
      JSON.stringify({
        manifest: result.manifestPath,
        exported: result.exported.length,
        skipped: result.skipped.length,
      }),
    )
    return 0
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    return 2
  }
}

main().then((code) => {
  process.exitCode = code
})
