/** Shared test fixtures: deterministic synthetic PNGs and a PRDS reader. */

import { mkdtempSync, readFileSync, writeFileSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'
import { PNG } from 'pngjs'

export function tempDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix))
}

/** Tiny deterministic generator so fixtures never depend on Math.random. */
export function lcg(seed: number): () => number {
  let state = seed >>> 0
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0
    return state / 2 ** 32
  }
}

/**
 * Write a deterministic RGB PNG: a seeded coarse 8x8 block pattern (the
 * class-distinctive structure, strong enough to survive resizing and
 * pooling) plus per-pixel noise (the member-distinctive part).
 */
export function writeSyntheticPng(path: string, baseSeed: number, noiseSeed: number, size = 64): void {
  const base = lcg(baseSeed)
  const grid = 8
  const blocks: number[] = []
  for (let i = 0; i < grid * grid * 3; i++) blocks.push(base() * 220)
  const noise = lcg(noiseSeed)
  const png = new PNG({ width: size, height: size })
  const cell = size / grid
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const blockAt = (Math.floor(y / cell) * grid + Math.floor(x / cell)) * 3
      const p = y * size + x
      for (let c = 0; c < 3; c++) {
        png.data[p * 4 + c] = Math.max(0, Math.min(255, Math.round(blocks[blockAt + c] + noise() * 40)))
      }
      png.data[p * 4 + 3] = 255
    }
  }
  writeFileSync(path, PNG.sync.write(png))
}

export interface StoreFile {
  channels: number
  ids: string[]
  labels: Map<string, string>
  /** row-major N x channels */
  matrix: Float32Array
}

/** Parse the engine's descriptor-store output (PRDS) for cross-checks. */
export function readStoreFile(path: string): StoreFile {
  const buf = readFileSync(path)
  if (buf.toString('ascii', 0, 4) !== 'PRDS') throw new Error(`${path}: bad store magic`)
  const version = buf.readUInt16LE(4)
  if (version !== 1) throw new Error(`${path}: unsupported store version ${version}`)
  const channels = buf.readUInt32LE(6)
  const count = buf.readUInt32LE(10)
  let offset = 14
  const ids: string[] = []
  const labels = new Map<string, string>()
  for (let i = 0; i < count; i++) {
    const idLen = buf.readUInt16LE(offset)
    offset += 2
    const id = buf.toString('utf-8', offset, offset + idLen)
    offset += idLen
    const labelLen = buf.readUInt16LE(offset)
    offset += 2
    labels.set(id, buf.toString('utf-8', offset, offset + labelLen))
    offset += labelLen
    ids.push(id)
  }
  const matrix = new Float32Array(count * channels)
  for (let i = 0; i < matrix.length; i++) {
    matrix[i] = buf.readFloatLE(offset + 4 * i)
  }
  return { channels, ids, labels, matrix }
}
