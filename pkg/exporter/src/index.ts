export { createStubBackbone, loadBackbone, loadModel, saveModel, stripHead, lastFeatureLayer } from './backbone'
export type { Backbone } from './backbone'
export { exportFeatures, readLabelFile } from './export'
export type { ExportResult, LabeledImage } from './export'
export { transferFinetune } from './finetune'
export type { FinetuneResult } from './finetune'
export { decodeImage, imageToInput, loadImageInput, CHANNEL_MEAN, CHANNEL_STD } from './images'
export {
  averagePool,
  encodeFeatureMap,
  formatManifest,
  readFeatureFile,
  sha256Hex,
  writeFeatureFile,
  writeManifest,
} from './prfm'
export type { FeatureMap, ManifestEntry, Split } from './prfm'
