/**
 * Backbone management: loading a convolutional feature extractor from a
 * local directory, creating a deterministic stub backbone for offline use
 * and testing, and stripping classification heads.
 *
 * Models are stored as a directory holding model.json (topology plus
 * weight specs) and weights.bin, via a small filesystem IO handler —
 * the pure-JS TensorFlow build has no file:// medium of its own.
 */

import * as tf from '@tensorflow/tfjs'
import { mkdirSync, readFileSync, writeFileSync } from 'fs'
import { join } from 'path'

export interface Backbone {
  model: tf.LayersModel
  inputSize: number
  /** height/width/channels of the feature layer, e.g. [7, 7, 1280] */
  featureShape: [number, number, number]
}

export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async artifacts => {
      const weightData = artifacts.weightData as ArrayBuffer
      writeFileSync(join(dir, 'weights.bin'), Buffer.from(weightData))
      writeFileSync(
        join(dir, 'model.json'),
        JSON.stringify({
          modelTopology: artifacts.modelTopology,
          weightSpecs: artifacts.weightSpecs,
        }),
        'utf-8',
      )
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
    }),
  )
}

export async function loadModel(dir: string): Promise<tf.LayersModel> {
  const meta = JSON.parse(readFileSync(join(dir, 'model.json'), 'utf-8'))
  const weights = readFileSync(join(dir, 'weights.bin'))
  const weightData = weights.buffer.slice(weights.byteOffset, weights.byteOffset + weights.byteLength)
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: meta.modelTopology,
      weightSpecs: meta.weightSpecs,
      weightData,
    }),
  )
}

export async function loadBackbone(dir: string): Promise<Backbone> {
  const model = await loadModel(dir)
  const input = model.inputs[0].shape
  const output = model.outputs[0].shape
  if (!input || input.length !== 4 || !output || output.length !== 4) {
    throw new Error(`backbone must map an image batch to a spatial feature map, got ${input} -> ${output}`)
  }
  return {
    model,
    inputSize: input[1] as number,
    featureShape: [output[1] as number, output[2] as number, output[3] as number],
  }
}

/**
 * A small deterministic convnet standing in for a pretrained backbone:
 * 224 x 224 x 3 in, 7 x 7 x 1280 feature layer out (five stride-2 convs).
 * Weight init is seeded, so two stubs with the same seed are identical.
 */
export function createStubBackbone(seed = 0, channels = 1280): tf.LayersModel {
  let next = seed
  const layerSeed = () => {
    next = (next * 31 + 17) % 2147483647
    return next
  }
  const conv = (filters: number, name: string) =>
    tf.layers.conv2d({
      filters,
      kernelSize: 3,
      strides: 2,
      padding: 'same',
      activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed: layerSeed() }),
      biasInitializer: 'zeros',
      name,
    })

  const model = tf.sequential({ name: 'stub_backbone' })
  model.add(tf.layers.inputLayer({ inputShape: [224, 224, 3] }))
  model.add(conv(8, 'stem_1'))   // 112
  model.add(conv(16, 'stem_2'))  // 56
  model.add(conv(24, 'stem_3'))  // 28
  model.add(conv(32, 'stem_4'))  // 14
  model.add(conv(channels, 'feature_layer')) // 7
  return model
}

/** The last layer that still produces a spatial (rank-4) output. */
export function lastFeatureLayer(model: tf.LayersModel): tf.layers.Layer {
  for (let i = model.layers.length - 1; i >= 0; i--) {
    const shape = model.layers[i].outputShape as number[]
    if (Array.isArray(shape) && shape.length === 4) return model.layers[i]
  }
  throw new Error('model has no spatial feature layer')
}

/**
 * Cut a model back to its last spatial feature layer, dropping any pooling
 * or classification head stacked on top.
 */
export function stripHead(model: tf.LayersModel): tf.LayersModel {
  const feature = lastFeatureLayer(model)
  const featureOutput = feature.output as tf.SymbolicTensor
  if (model.outputs[0].name === featureOutput.name) return model
  return tf.model({ inputs: model.inputs, outputs: featureOutput })
}
