/**
 * Image decoding and preprocessing. PNG and JPEG decode in pure JS; every
 * image is bilinearly resized to the backbone's input size and normalized
 * channel-wise. The normalization constants are recorded in the exported
 * manifest so downstream consumers know exactly what the features saw.
 */

import * as tf from '@tensorflow/tfjs'
import { readFileSync } from 'fs'
import * as jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

export const CHANNEL_MEAN = [0.485, 0.456, 0.406]
export const CHANNEL_STD = [0.229, 0.224, 0.225]

export interface DecodedImage {
  width: number
  height: number
  /** RGBA interleaved, 8-bit */
  data: Uint8Array
}

export function decodeImage(path: string): DecodedImage {
  const raw = readFileSync(path)
  if (raw.length >= 8 && raw.readUInt32BE(0) === 0x89504e47) {
    const png = PNG.sync.read(raw)
    return { width: png.width, height: png.height, data: new Uint8Array(png.data) }
  }
  if (raw.length >= 2 && raw[0] === 0xff && raw[1] === 0xd8) {
    const img = jpeg.decode(raw, { useTArray: true, formatAsRGBA: true })
    return { width: img.width, height: img.height, data: img.data }
  }
  throw new Error(`${path}: not a PNG or JPEG`)
}

/** Decoded image -> normalized [1, size, size, 3] float32 batch. */
export function imageToInput(image: DecodedImage, size: number): tf.Tensor4D {
  return tf.tidy(() => {
    const pixels = image.width * image.height
    const rgb = new Float32Array(pixels * 3)
    for (let p = 0; p < pixels; p++) {
      rgb[p * 3] = image.data[p * 4] / 255
      rgb[p * 3 + 1] = image.data[p * 4 + 1] / 255
      rgb[p * 3 + 2] = image.data[p * 4 + 2] / 255
    }
    let x = tf.tensor3d(rgb, [image.height, image.width, 3])
    if (image.height !== size || image.width !== size) {
      x = tf.image.resizeBilinear(x, [size, size])
    }
    const normalized = x.sub(tf.tensor1d(CHANNEL_MEAN)).div(tf.tensor1d(CHANNEL_STD))
    return normalized.expandDims(0) as tf.Tensor4D
  })
}

export function loadImageInput(path: string, size: number): tf.Tensor4D {
  return imageToInput(decodeImage(path), size)
}
