/**
 * Embedding store (.mhed) writer and verifier.
 *
 * File layout (little-endian, byte-compatible with the motifhead reader):
 *
 *   offset 0   magic           4 bytes, "MHED"
 *   offset 4   format version  u32 (currently 1)
 *   offset 8   embedding_dim   u32
 *   offset 12  record count    u64
 *   offset 20  index block     per record: id length u16, UTF-8 id bytes,
 *                              absolute payload offset u64
 *   ...        payloads        embedding_dim float32 values per record,
 *                              contiguous, in index order
 */

import { promises as fs } from 'node:fs'

export const MAGIC = 'MHED'
export const VERSION = 1
const HEADER_SIZE = 20

export interface StoreRecord {
  imageId: string
  features: Float32Array
}

export function encodeStore(dim: number, records: StoreRecord[]): Buffer {
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`embedding_dim must be a positive integer, got ${dim}`)
  }
  const seen = new Set<string>()
  const ids = records.map((r) => {
    if (seen.has(r.imageId)) {
      throw new Error(`duplicate image id ${JSON.stringify(r.imageId)}`)
    }
    seen.add(r.imageId)
    return Buffer.from(r.imageId, 'utf-8')
  })
  const indexSize = ids.reduce((acc, id) => acc + 2 + id.length + 8, 0)
  const recordBytes = 4 * dim
  const total = HEADER_SIZE + indexSize + recordBytes * records.length
  const out = Buffer.alloc(total)
  out.write(MAGIC, 0, 'ascii')
  out.writeUInt32LE(VERSION, 4)
  out.writeUInt32LE(dim, 8)
  out.writeBigUInt64LE(BigInt(records.length), 12)
  let pos = HEADER_SIZE
  let payloadOffset = HEADER_SIZE + indexSize
  for (const id of ids) {
    out.writeUInt16LE(id.length, pos)
    id.copy(out, pos + 2)
    out.writeBigUInt64LE(BigInt(payloadOffset), pos + 2 + id.length)
    pos += 2 + id.length + 8
    payloadOffset += recordBytes
  }
  for (const record of records) {
    if (record.features.length !== dim) {
      throw new Error(
        `embedding for ${JSON.stringify(record.imageId)} has length ` +
          `${record.features.length}, store dim is ${dim}`,
      )
    }
    for (let i = 0; i < dim; i++) {
      out.writeFloatLE(record.features[i], pos)
      pos += 4
    }
  }
  return out
}

export async function writeStore(
  path: string,
  dim: number,
  records: StoreRecord[],
): Promise<void> {
  await fs.writeFile(path, encodeStore(dim, records))
}

export interface ParsedStore {
  dim: number
  count: number
  records: Map<string, Float32Array>
}

/** Strict reader used by tests; throws on any structural problem. */
export function decodeStore(blob: Buffer): ParsedStore {
  const report = verifyStoreBuffer(blob)
  if (!report.ok) {
    throw new Error(report.problems.join('; '))
  }
  const records = new Map<string, Float32Array>()
  for (const entry of report.entries) {
    const vec = new Float32Array(report.dim)
    for (let i = 0; i < report.dim; i++) {
      vec[i] = blob.readFloatLE(entry.offset + 4 * i)
    }
    records.set(entry.imageId, vec)
  }
  return { dim: report.dim, count: report.count, records }
}

export interface VerifyReport {
  ok: boolean
  dim: number
  count: number
  problems: string[]
  entries: Array<{ imageId: string; offset: number }>
}

export function summarize(report: VerifyReport): string {
  if (report.ok) return `OK, count=${report.count}, dim=${report.dim}`
  return report.problems.map((p) => `ERROR: ${p}`).join('\n')
}

/**
 * Structural and finiteness checks, reporting byte offsets on failure.
 * Mirrors the downstream `motifhead extract-check` validation.
 */
export function verifyStoreBuffer(blob: Buffer): VerifyReport {
  const report: VerifyReport = { ok: false, dim: 0, count: 0, problems: [], entries: [] }
  if (blob.length < HEADER_SIZE) {
    report.problems.push(
      `file too short for header (${blob.length} bytes, need ${HEADER_SIZE})`,
    )
    return report
  }
  const magic = blob.toString('ascii', 0, 4)
  if (magic !== MAGIC) {
    report.problems.push(`bad magic ${JSON.stringify(magic)} at offset 0`)
    return report
  }
  const version = blob.readUInt32LE(4)
  if (version !== VERSION) {
    report.problems.push(`unsupported version ${version} at offset 4`)
    return report
  }
  const dim = blob.readUInt32LE(8)
  if (dim < 1) {
    report.problems.push(`embedding_dim ${dim} at offset 8 must be >= 1`)
    return report
  }
  const count = Number(blob.readBigUInt64LE(12))
  report.dim = dim
  report.count = count
  let pos = HEADER_SIZE
  const seen = new Set<string>()
  for (let i = 0; i < count; i++) {
    if (pos + 2 > blob.length) {
      report.problems.push(`index entry ${i} truncated at offset ${pos}`)
      return report
    }
    const idLen = blob.readUInt16LE(pos)
    if (pos + 2 + idLen + 8 > blob.length) {
      report.problems.push(`index entry ${i} truncated at offset ${pos}`)
      return report
    }
    const imageId = blob.toString('utf-8', pos + 2, pos + 2 + idLen)
    if (seen.has(imageId)) {
      report.problems.push(
        `duplicate id ${JSON.stringify(imageId)} at offset ${pos}`,
      )
      return report
    }
    seen.add(imageId)
    const offset = Number(blob.readBigUInt64LE(pos + 2 + idLen))
    report.entries.push({ imageId, offset })
    pos += 2 + idLen + 8
  }
  const payloadStart = pos
  const recordBytes = 4 * dim
  const expected = payloadStart + recordBytes * count
  if (blob.length !== expected) {
    report.problems.push(
      `file size ${blob.length} != expected ${expected} ` +
        `(payloads start at offset ${payloadStart})`,
    )
    return report
  }
  for (let i = 0; i < report.entries.length; i++) {
    const { imageId, offset } = report.entries[i]
    const expectedOffset = payloadStart + i * recordBytes
    if (offset !== expectedOffset) {
      report.problems.push(
        `payload offset for ${JSON.stringify(imageId)} is ${offset}, ` +
          `expected ${expectedOffset}`,
      )
      return report
    }
    for (let j = 0; j < dim; j++) {
      const v = blob.readFloatLE(offset + 4 * j)
      if (!Number.isFinite(v)) {
        report.problems.push(
          `non-finite values in payload for ${JSON.stringify(imageId)} ` +
            `at offset ${offset}`,
        )
        return report
      }
    }
  }
  report.ok = true
  return report
}

export async function verifyStoreFile(path: string): Promise<VerifyReport> {
  let blob: Buffer
  try {
    blob = await fs.readFile(path)
  } catch {
    return {
      ok: false,
      dim: 0,
      count: 0,
      problems: [`file not found: ${path}`],
      entries: [],
    }
  }
  return verifyStoreBuffer(blob)
}
