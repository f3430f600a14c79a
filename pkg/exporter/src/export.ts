/**
 * Export: run the backbone over a labeled image folder and emit one
 * feature file per image plus the dataset manifest, in the retrieval
 * engine's formats. Per-image failures are logged and skipped; the export
 * fails outright only if nothing could be exported.
 */

import * as tf from '@tensorflow/tfjs'
import { readFileSync } from 'fs'
import { basename, join } from 'path'

import { Backbone } from './backbone'
import { CHANNEL_MEAN, CHANNEL_STD, loadImageInput } from './images'
import { ManifestEntry, Split, sha256Hex, writeFeatureFile, writeManifest } from './prfm'

export interface LabeledImage {
  file: string
  label: string
  split: Split
}

/**
 * Parse the label file: TSV lines of image filename, label, and an
 * optional split (index / query / train; default index). '#' comments.
 */
export function readLabelFile(path: string): LabeledImage[] {
  const out: LabeledImage[] = []
  for (const line of readFileSync(path, 'utf-8').split('\n')) {
    if (!line.trim() || line.startsWith('#')) continue
    const fields = line.split('\t')
    if (fields.length < 2 || fields.length > 3) {
      throw new Error(`label file: malformed line ${JSON.stringify(line)}`)
    }
    const split = (fields[2] ?? 'index') as Split
    if (!['index', 'query', 'train'].includes(split)) {
      throw new Error(`label file: unknown split ${split}`)
    }
    out.push({ file: fields[0], label: fields[1], split })
  }
  return out
}

export interface ExportResult {
  exported: ManifestEntry[]
  skipped: { file: string; reason: string }[]
  manifestPath: string
}

export async function exportFeatures(options: {
  imageDir: string
  labelFile: string
  outDir: string
  backbone: Backbone
  log?: (message: string) => void
}): Promise<ExportResult> {
  const { imageDir, labelFile, outDir, backbone } = options
  const log = options.log ?? (() => {})
  const images = readLabelFile(labelFile)
  const [fh, fw, fc] = backbone.featureShape

  const exported: ManifestEntry[] = []
  const skipped: { file: string; reason: string }[] = []
  for (const item of images) {
    const imagePath = join(imageDir, item.file)
    try {
      const input = loadImageInput(imagePath, backbone.inputSize)
      const output = tf.tidy(() => backbone.model.predict(input) as tf.Tensor)
      input.dispose()
      const data = new Float32Array(await output.data())
      output.dispose()
      const id = basename(item.file).replace(/\.[^.]+$/, '')
      const featureName = `${id}.prfm`
      writeFeatureFile({ height: fh, width: fw, channels: fc, data }, join(outDir, featureName))
      exported.push({
        id,
        label: item.label,
        split: item.split,
        featurePath: featureName,
        sha256: sha256Hex(join(outDir, featureName)),
      })
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err)
      skipped.push({ file: item.file, reason })
      log(`skipped ${item.file}: ${reason}`)
    }
  }
  if (exported.length === 0) {
    throw new Error('no images could be exported')
  }
  const manifestPath = join(outDir, 'manifest.tsv')
  writeManifest(exported, manifestPath, [
    `input_size ${backbone.inputSize}`,
    `feature_shape ${fh}x${fw}x${fc}`,
    `normalization mean=${CHANNEL_MEAN.join(',')} std=${CHANNEL_STD.join(',')}`,
  ])
  return { exported, skipped, manifestPath }
}
