#!/usr/bin/env node
/**
 * motifhead-extract: compute embeddings with a frozen encoder and write a
 * motifhead-compatible .mhed store.
 *
 *   extract --backend clip-eva|dinov2|detectron2-fpn --images manifest.txt \
 *           --out store.mhed [--model path-or-id] [--runner tfjs|synthetic] \
 *           [--batch-size 16] [--device cpu] [--normalize]
 *   verify-store --store store.mhed
 *
 * Exit codes: 0 success, 1 extraction/validation failure, 2 bad usage.
 */

import { pathToFileURL } from 'node:url'

import { loadImageManifest, extract, DEFAULT_CONFIG } from './extract.js'
import { summarize, verifyStoreFile } from './store.js'
import { BACKENDS } from './backends.js'

interface Flags {
  [key: string]: string | boolean
}

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {}
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]
    if (!arg.startsWith('--')) {
      throw new Error(`unexpected argument ${JSON.stringify(arg)}`)
    }
    const name = arg.slice(2)
    if (i + 1 < argv.length && !argv[i + 1].startsWith('--')) {
      flags[name] = argv[++i]
    } else {
      flags[name] = true
    }
  }
  return flags
}

function requireString(flags: Flags, name: string): string {
  const value = flags[name]
  if (typeof value !== 'string' || !value) {
    throw new Error(`missing required flag --${name}`)
  }
  return value
}

const USAGE = `usage:
  motifhead-extract extract --backend <${Object.keys(BACKENDS).join('|')}> \\
      --images <manifest.txt> --out <store.mhed> \\
      [--model <id-or-path>] [--runner tfjs|synthetic] \\
      [--batch-size 16] [--device cpu] [--normalize]
  motifhead-extract verify-store --store <store.mhed>`

async function cmdExtract(flags: Flags): Promise<number> {
  const config = {
    backend: requireString(flags, 'backend'),
    model: typeof flags.model === 'string' ? flags.model : undefined,
    device: typeof flags.device === 'string' ? flags.device : DEFAULT_CONFIG.device,
    batchSize:
      typeof flags['batch-size'] === 'string'
        ? Number(flags['batch-size'])
        : DEFAULT_CONFIG.batchSize,
    runner: typeof flags.runner === 'string' ? flags.runner : DEFAULT_CONFIG.runner,
    normalize: flags.normalize === true,
  }
  const imagesPath = requireString(flags, 'images')
  const outPath = requireString(flags, 'out')
  const images = await loadImageManifest(imagesPath)
  const result = await extract(config, images, outPath)
  console.log(`wrote ${result.written} embeddings to ${outPath}`)
  for (const skip of result.skipped) {
    console.error(`skipped ${skip.imageId}: ${skip.reason}`)
  }
  if (result.skipped.length > 0) {
    console.error(`skipped ${result.skipped.length} of ${images.length} images`)
  }
  const report = await verifyStoreFile(outPath)
  console.log(summarize(report))
  return report.ok ? 0 : 1
}

async function cmdVerify(flags: Flags): Promise<number> {
  const report = await verifyStoreFile(requireString(flags, 'store'))
  console.log(summarize(report))
  return report.ok ? 0 : 1
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv
  try {
    if (command === 'extract') return await cmdExtract(parseFlags(rest))
    if (command === 'verify-store') return await cmdVerify(parseFlags(rest))
    console.error(USAGE)
    return 2
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    return command === 'extract' || command === 'verify-store' ? 1 : 2
  }
}

const entry = process.argv[1]
if (entry && import.meta.url === pathToFileURL(entry).href) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code
  })
}
