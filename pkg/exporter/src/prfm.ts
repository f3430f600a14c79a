/**
 * The engine's binary feature-file format and tab-separated manifest.
 *
 * Feature file layout (little-endian): magic "PRFM", version u16 (=1),
 * H u32, W u32, C u32, then H*W*C float32 values in (h, w, c) row-major
 * order. The manifest is UTF-8 TSV with LF line endings and '#' comments:
 * id, label, split, feature_path, sha256.
 */

import { createHash } from 'crypto'
import { readFileSync, writeFileSync } from 'fs'

export const FEATURE_MAGIC = 'PRFM'
export const FORMAT_VERSION = 1
const HEADER_BYTES = 18

export interface FeatureMap {
  height: number
  width: number
  channels: number
  /** (h, w, c) row-major */
  data: Float32Array
}

export function encodeFeatureMap(map: FeatureMap): Buffer {
  const count = map.height * map.width * map.channels
  if (map.data.length !== count) {
    throw new Error(`feature data length ${map.data.length} != ${count}`)
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * count)
  buf.write(FEATURE_MAGIC, 0, 'ascii')
  buf.writeUInt16LE(FORMAT_VERSION, 4)
  buf.writeUInt32LE(map.height, 6)
  buf.writeUInt32LE(map.width, 10)
  buf.writeUInt32LE(map.channels, 14)
  for (let i = 0; i < count; i++) {
    buf.writeFloatLE(map.data[i], HEADER_BYTES + 4 * i)
  }
  return buf
}

export function writeFeatureFile(map: FeatureMap, path: string): void {
  writeFileSync(path, encodeFeatureMap(map))
}

/** Inverse of writeFeatureFile; used for self-checks after export. */
export function readFeatureFile(path: string): FeatureMap {
  const buf = readFileSync(path)
  if (buf.length < HEADER_BYTES) throw new Error(`${path}: truncated header`)
  if (buf.toString('ascii', 0, 4) !== FEATURE_MAGIC) {
    throw new Error(`${path}: bad magic`)
  }
  const version = buf.readUInt16LE(4)
  if (version !== FORMAT_VERSION) throw new Error(`${path}: unsupported version ${version}`)
  const height = buf.readUInt32LE(6)
  const width = buf.readUInt32LE(10)
  const channels = buf.readUInt32LE(14)
  const count = height * width * channels
  if (buf.length !== HEADER_BYTES + 4 * count) {
    throw new Error(`${path}: expected ${HEADER_BYTES + 4 * count} bytes, got ${buf.length}`)
  }
  const data = new Float32Array(count)
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(HEADER_BYTES + 4 * i)
  }
  return { height, width, channels, data }
}

export function sha256Hex(path: string): string {
  return createHash('sha256').update(readFileSync(path)).digest('hex')
}

export type Split = 'index' | 'query' | 'train'

export interface ManifestEntry {
  id: string
  label: string
  split: Split
  featurePath: string
  sha256: string
}

export function formatManifest(entries: ManifestEntry[], comments: string[] = []): string {
  const lines = ['# id\tlabel\tsplit\tfeature_path\tsha256']
  for (const c of comments) lines.push(`# ${c}`)
  for (const e of entries) {
    lines.push(`${e.id}\t${e.label}\t${e.split}\t${e.featurePath}\t${e.sha256}`)
  }
  return lines.join('\n') + '\n'
}

export function writeManifest(entries: ManifestEntry[], path: string, comments: string[] = []): void {
  writeFileSync(path, formatManifest(entries, comments), 'utf-8')
}

/** Average over all spatial positions per channel; mirrors the engine's pooling. */
export function averagePool(map: FeatureMap): Float64Array {
  const pooled = new Float64Array(map.channels)
  const positions = map.height * map.width
  for (let p = 0; p < positions; p++) {
    const base = p * map.channels
    for (let c = 0; c < map.channels; c++) {
      pooled[c] += map.data[base + c]
    }
  }
  for (let c = 0; c < map.channels; c++) pooled[c] /= positions
  return pooled
}
