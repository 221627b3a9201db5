/**
 * Extraction pipeline: image manifest in, embedding store out.
 *
 * The image manifest is line-oriented UTF-8, one `image_id|path` per line,
 * '#' comments and blank lines ignored. Unreadable images are skipped and
 * reported; a feature vector of the wrong length is fatal (it means the
 * model/backend pairing is wrong, not the data).
 */

import { promises as fs } from 'node:fs'
import path from 'node:path'

import { backendSpec, FeatureRunner, makeRunner } from './backends.js'
import { StoreRecord, writeStore } from './store.js'

export interface ExtractorConfig {
  backend: string
  model?: string
  device: string
  batchSize: number
  runner: string
  normalize: boolean
}

export const DEFAULT_CONFIG: Omit<ExtractorConfig, 'backend'> = {
  device: 'cpu',
  batchSize: 16,
  runner: 'tfjs',
  normalize: false,
}

export interface ImageEntry {
  imageId: string
  path: string
}

export function parseImageManifest(text: string): ImageEntry[] {
  const entries: ImageEntry[] = []
  const seen = new Set<string>()
  text.split(/\r?\n/).forEach((raw, lineIdx) => {
    const line = raw.trim()
    if (!line || line.startsWith('#')) return
    const sep = line.indexOf('|')
    if (sep <= 0 || sep === line.length - 1) {
      throw new Error(`line ${lineIdx + 1}: expected "image_id|path", got ${JSON.stringify(line)}`)
    }
    const imageId = line.slice(0, sep).trim()
    const imagePath = line.slice(sep + 1).trim()
    if (seen.has(imageId)) {
      throw new Error(`line ${lineIdx + 1}: duplicate image id ${JSON.stringify(imageId)}`)
    }
    seen.add(imageId)
    entries.push({ imageId, path: imagePath })
  })
  return entries
}

export async function loadImageManifest(manifestPath: string): Promise<ImageEntry[]> {
  const text = await fs.readFile(manifestPath, 'utf-8')
  const base = path.dirname(manifestPath)
  return parseImageManifest(text).map((e) => ({
    imageId: e.imageId,
    path: path.isAbsolute(e.path) ? e.path : path.join(base, e.path),
  }))
}

export function l2Normalize(features: Float32Array): Float32Array {
  let sq = 0
  for (let i = 0; i < features.length; i++) sq += features[i] * features[i]
  const norm = Math.sqrt(sq)
  if (norm === 0) {
    throw new Error('cannot L2-normalize a zero feature vector')
  }
  const out = new Float32Array(features.length)
  for (let i = 0; i < features.length; i++) out[i] = features[i] / norm
  return out
}

export interface ExtractResult {
  written: number
  skipped: Array<{ imageId: string; reason: string }>
}

export async function extract(
  config: ExtractorConfig,
  images: ImageEntry[],
  outPath: string,
  runnerOverride?: FeatureRunner,
): Promise<ExtractResult> {
  const spec = backendSpec(config.backend)
  if (config.batchSize < 1) {
    throw new Error(`batch size must be >= 1, got ${config.batchSize}`)
  }
  const runner =
    runnerOverride ?? makeRunner(config.runner, config.model ?? spec.defaultModel)
  const records: StoreRecord[] = []
  const skipped: ExtractResult['skipped'] = []
  for (let start = 0; start < images.length; start += config.batchSize) {
    const batch = images.slice(start, start + config.batchSize)
    for (const entry of batch) {
      let bytes: Buffer
      try {
        bytes = await fs.readFile(entry.path)
      } catch (err) {
        skipped.push({
          imageId: entry.imageId,
          reason: `unreadable: ${(err as Error).message}`,
        })
        continue
      }
      let features = await runner.features(bytes, spec)
      if (features.length !== spec.dim) {
        throw new Error(
          `backend ${spec.name} expects ${spec.dim} features, runner ` +
            `produced ${features.length} for ${JSON.stringify(entry.imageId)}`,
        )
      }
      if (config.normalize) features = l2Normalize(features)
      records.push({ imageId: entry.imageId, features })
    }
  }
  await writeStore(outPath, spec.dim, records)
  return { written: records.length, skipped }
}
