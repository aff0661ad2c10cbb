/** Loading a locally saved tfjs Layers model and running patch inference.

A "model" is a directory holding tfjs artifacts (model.json plus weight
shards). The model must map a batch of 16x16 RGB patches in [0, 1]
(shape [N, 16, 16, 3]) to one feature vector per patch (shape [N, D]);
D is read from the model, not configured. Names (dino/clip/vit) resolve to
subdirectories of VFM_BRIDGE_MODELS or ./models.
*/

import fs from 'node:fs'
import path from 'node:path'
import * as tf from '@tensorflow/tfjs'

import { ModelError } from './errors'

export const PATCH = 16
export const GRID = 16 // 16x16 patches over a 256x256 crop

export interface PatchModel {
  /** Extractor identity recorded in exported banks: "<name>@<output layer>". */
  extractorName: string
  dim: number
  run(patches: Float32Array, count: number): Float32Array
}

export function resolveModelDir(nameOrDir: string): string {
  if (fs.existsSync(path.join(nameOrDir, 'model.json'))) return nameOrDir
  const root = process.env.VFM_BRIDGE_MODELS ?? 'models'
  return path.join(root, nameOrDir)
}

export async function loadPatchModel(nameOrDir: string): Promise<PatchModel> {
  const dir = resolveModelDir(nameOrDir)
  let model: tf.LayersModel
  try {
    const manifest = JSON.parse(fs.readFileSync(path.join(dir, 'model.json'), 'utf-8'))
    const weightSpecs = manifest.weightsManifest.flatMap((g: any) => g.weights)
    const shards: Buffer[] = manifest.weightsManifest.flatMap((g: any) =>
      g.paths.map((p: string) => fs.readFileSync(path.join(dir, p))),
    )
    const weightData = new Uint8Array(Buffer.concat(shards)).buffer
    model = await tf.loadLayersModel(
      tf.io.fromMemory({ modelTopology: manifest.modelTopology, weightSpecs, weightData }),
    )
  } catch (err) {
    throw new ModelError(`cannot load model from ${dir}: ${(err as Error).message}`)
  }

  const outShape = model.outputs[0].shape
  const dim = outShape[outShape.length - 1]
  if (outShape.length !== 2 || typeof dim !== 'number') {
    throw new ModelError(`model must map patches to [N, D] features, got [${outShape}]`)
  }
  const name = path.basename(nameOrDir.replace(/\/+$/, ''))
  return {
    extractorName: `${name}@${model.outputs[0].name}`,
    dim,
    run(patches: Float32Array, count: number): Float32Array {
      return tf.tidy(() => {
        const input = tf.tensor4d(patches, [count, PATCH, PATCH, 3])
        const out = model.predict(input) as tf.Tensor
        return out.dataSync() as Float32Array
      })
    },
  }
}
