/**
 * Exporter command line.
 *
 *   make-stub-backbone <dir> [--seed N] [--channels N]
 *   export <imageDir> <labelFile> <outDir> [--backbone DIR]
 *   finetune <imageDir> <labelFile> <backboneDir> <outDir> [--epochs N] [--lr F]
 *
 * Without --backbone, export uses a fresh seed-0 stub backbone. Exit code
 * is 0 on success, 1 when nothing could be exported or arguments are bad.
 */

import { mkdirSync } from 'fs'

import { createStubBackbone, loadBackbone, saveModel } from './backbone'
import { exportFeatures } from './export'
import { transferFinetune } from './finetune'

function flag(args: string[], name: string): string | undefined {
  const at = args.indexOf(name)
  return at >= 0 ? args[at + 1] : undefined
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv
  try {
    if (command === 'make-stub-backbone') {
      const [dir] = rest
      if (!dir) throw new Error('usage: make-stub-backbone <dir> [--seed N] [--channels N]')
      const seed = Number(flag(rest, '--seed') ?? 0)
      const channels = Number(flag(rest, '--channels') ?? 1280)
      await saveModel(createStubBackbone(seed, channels), dir)
      console.log(`wrote stub backbone (seed ${seed}, ${channels} channels) to ${dir}`)
      return 0
    }
    if (command === 'export') {
      const [imageDir, labelFile, outDir] = rest
      if (!outDir) throw new Error('usage: export <imageDir> <labelFile> <outDir> [--backbone DIR]')
      mkdirSync(outDir, { recursive: true })
      const backboneDir = flag(rest, '--backbone')
      const backbone = backboneDir
        ? await loadBackbone(backboneDir)
        : { model: createStubBackbone(0), inputSize: 224, featureShape: [7, 7, 1280] as [number, number, number] }
      const result = await exportFeatures({ imageDir, labelFile, outDir, backbone, log: console.error })
      console.log(`exported ${result.exported.length} images (${result.skipped.length} skipped) -> ${result.manifestPath}`)
      return 0
    }
    if (command === 'finetune') {
      const [imageDir, labelFile, backboneDir, outDir] = rest
      if (!outDir) throw new Error('usage: finetune <imageDir> <labelFile> <backboneDir> <outDir> [--epochs N] [--lr F]')
      const backbone = await loadBackbone(backboneDir)
      const result = await transferFinetune({
        imageDir,
        labelFile,
        backbone,
        epochs: Number(flag(rest, '--epochs') ?? 5),
        learningRate: Number(flag(rest, '--lr') ?? 1e-3),
        log: console.error,
      })
      await saveModel(result.model, outDir)
      console.log(`fine-tuned on ${result.classCount} classes, saved feature extractor to ${outDir}`)
      return 0
    }
    throw new Error(`unknown command ${command ?? '(none)'}`)
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 1
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then(code => process.exit(code))
}
