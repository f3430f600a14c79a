import { readdirSync, writeFileSync } from 'fs'
import { join } from 'path'
import { beforeAll, describe, expect, it } from 'vitest'

import { Backbone, createStubBackbone } from '../src/backbone'
import { exportFeatures, readLabelFile } from '../src/export'
import { readFeatureFile, sha256Hex } from '../src/prfm'
import { tempDir, writeSyntheticPng } from './helpers'

let backbone: Backbone

beforeAll(() => {
  backbone = {
    model: createStubBackbone(0, 32),
    inputSize: 224,
    featureShape: [7, 7, 32],
  }
})

function makeImageSet(dir: string, perClass = 2, classes = 3) {
  const lines: string[] = ['# file\tlabel\tsplit']
  for (let c = 0; c < classes; c++) {
    for (let m = 0; m < perClass; m++) {
      const name = `c${c}m${m}.png`
      writeSyntheticPng(join(dir, name), 100 + c, 1000 + c * 10 + m)
      lines.push(`${name}\tL${c}\t${m === 0 ? 'query' : 'index'}`)
    }
  }
  const labelFile = join(dir, 'labels.tsv')
  writeFileSync(labelFile, lines.join('\n') + '\n')
  return labelFile
}

describe('label file parsing', () => {
  it('reads file, label, and optional split', () => {
    const dir = tempDir('labels-')
    const path = join(dir, 'l.tsv')
    writeFileSync(path, '# c\na.png\tL1\nb.png\tL2\tquery\n')
    expect(readLabelFile(path)).toEqual([
      { file: 'a.png', label: 'L1', split: 'index' },
      { file: 'b.png', label: 'L2', split: 'query' },
    ])
  })

  it('rejects unknown splits', () => {
    const dir = tempDir('labels-')
    const path = join(dir, 'l.tsv')
    writeFileSync(path, 'a.png\tL1\tvalidation\n')
    expect(() => readLabelFile(path)).toThrow(/unknown split/)
  })
})

describe('export', () => {
  it('writes one feature file per image plus the manifest', async () => {
    const imageDir = tempDir('img-')
    const outDir = tempDir('out-')
    const labelFile = makeImageSet(imageDir)
    const result = await exportFeatures({ imageDir, labelFile, outDir, backbone })
    expect(result.exported.length).toBe(6)
    expect(result.skipped.length).toBe(0)
    const files = readdirSync(outDir).sort()
    expect(files.filter(f => f.endsWith('.prfm')).length).toBe(6)
    expect(files).toContain('manifest.tsv')
    for (const entry of result.exported) {
      const map = readFeatureFile(join(outDir, entry.featurePath))
      expect([map.height, map.width, map.channels]).toEqual([7, 7, 32])
      expect(entry.sha256).toBe(sha256Hex(join(outDir, entry.featurePath)))
    }
  })

  it('skips undecodable images with a log line and keeps going', async () => {
    const imageDir = tempDir('img-')
    const outDir = tempDir('out-')
    const labelFile = makeImageSet(imageDir, 1, 2)
    writeFileSync(join(imageDir, 'broken.png'), Buffer.from('this is not a png'))
    writeFileSync(labelFile, 'c0m0.png\tL0\nbroken.png\tL0\nc1m0.png\tL1\n')
    const logged: string[] = []
    const result = await exportFeatures({ imageDir, labelFile, outDir, backbone, log: m => logged.push(m) })
    expect(result.exported.map(e => e.id).sort()).toEqual(['c0m0', 'c1m0'])
    expect(result.skipped).toEqual([{ file: 'broken.png', reason: expect.stringContaining('PNG') }])
    expect(logged.join('\n')).toContain('broken.png')
  })

  it('fails only when nothing exports', async () => {
    const imageDir = tempDir('img-')
    const outDir = tempDir('out-')
    const labelFile = join(imageDir, 'labels.tsv')
    writeFileSync(join(imageDir, 'broken.png'), Buffer.from('junk'))
    writeFileSync(labelFile, 'broken.png\tL0\n')
    await expect(exportFeatures({ imageDir, labelFile, outDir, backbone })).rejects.toThrow(/no images/)
  })

  it('re-export is checksum-identical', async () => {
    const imageDir = tempDir('img-')
    const labelFile = makeImageSet(imageDir, 1, 3)
    const outA = tempDir('outA-')
    const outB = tempDir('outB-')
    const a = await exportFeatures({ imageDir, labelFile, outDir: outA, backbone })
    const b = await exportFeatures({ imageDir, labelFile, outDir: outB, backbone })
    expect(a.exported.map(e => e.sha256)).toEqual(b.exported.map(e => e.sha256))
  })
})
