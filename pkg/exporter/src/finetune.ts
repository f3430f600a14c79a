/**
 * Transfer fine-tuning: put a fresh classification layer on top of the
 * backbone's pooled features, freeze everything except the last feature
 * layer and the new classifier, train on labeled images, then strip the
 * classifier again so the result is a feature extractor adapted to the
 * new label set.
 */

import * as tf from '@tensorflow/tfjs'
import { join } from 'path'

import { Backbone, lastFeatureLayer, stripHead } from './backbone'
import { loadImageInput } from './images'
import { LabeledImage, readLabelFile } from './export'

export interface FinetuneResult {
  model: tf.LayersModel
  /** mean training loss per epoch, in order */
  epochLosses: number[]
  classCount: number
}

export async function transferFinetune(options: {
  imageDir: string
  labelFile: string
  backbone: Backbone
  epochs: number
  learningRate?: number
  batchSize?: number
  log?: (message: string) => void
}): Promise<FinetuneResult> {
  const { imageDir, labelFile, backbone, epochs } = options
  const learningRate = options.learningRate ?? 1e-3
  const log = options.log ?? (() => {})
  const images = readLabelFile(labelFile).filter(i => i.split === 'train')
  if (images.length === 0) throw new Error('label file has no train-split images')

  const classes = [...new Set(images.map(i => i.label))].sort()
  if (classes.length < 2) throw new Error('fine-tuning needs at least two classes')

  const inputs = tf.concat(images.map(i => loadImageInput(join(imageDir, i.file), backbone.inputSize)))
  const targets = tf.oneHot(
    tf.tensor1d(images.map(i => classes.indexOf(i.label)), 'int32'),
    classes.length,
  )

  // classifier head: pool the feature layer, then one dense softmax layer
  const feature = lastFeatureLayer(backbone.model)
  const pooled = tf.layers.globalAveragePooling2d({ name: 'transfer_pool' }).apply(feature.output)
  const logits = tf.layers
    .dense({ units: classes.length, activation: 'softmax', name: 'transfer_classifier' })
    .apply(pooled) as tf.SymbolicTensor
  const trainable = tf.model({ inputs: backbone.model.inputs, outputs: logits })

  // freeze everything but the last feature layer and the new classifier
  for (const layer of trainable.layers) {
    layer.trainable = layer.name === feature.name || layer.name === 'transfer_classifier'
  }

  trainable.compile({ optimizer: tf.train.adam(learningRate), loss: 'categoricalCrossentropy' })
  const epochLosses: number[] = []
  if (epochs > 0) {
    const history = await trainable.fit(inputs, targets, {
      epochs,
      batchSize: options.batchSize ?? Math.min(8, images.length),
      shuffle: false,
      verbose: 0,
    })
    for (const value of history.history.loss as number[]) {
      epochLosses.push(Number(value))
      log(`epoch loss ${Number(value).toFixed(6)}`)
    }
  }
  inputs.dispose()
  targets.dispose()

  return { model: stripHead(trainable), epochLosses, classCount: classes.length }
}
