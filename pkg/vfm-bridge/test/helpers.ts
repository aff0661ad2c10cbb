import fs from 'node:fs'
import path from 'node:path'
import * as tf from '@tensorflow/tfjs'

import { RgbImage } from '../src/image'

/** Synthesize a C444 y4m clip with solid-gray frames (Y varies per frame). */
export function makeY4m(opts: {
  width: number
  height: number
  fps: number
  seconds: number
}): Buffer {
  const { width, height, fps, seconds } = opts
  const header = Buffer.from(`YUV4MPEG2 W${width} H${height} F${fps}:1 Ip A1:1 C444\n`, 'ascii')
  const chunks: Buffer[] = [header]
  const n = fps * seconds
  for (let i = 0; i < n; i++) {
    chunks.push(Buffer.from('FRAME\n', 'ascii'))
    const y = Buffer.alloc(width * height, 16 + Math.floor((i * 219) / Math.max(n - 1, 1)))
    const u = Buffer.alloc(width * height, 128)
    const v = Buffer.alloc(width * height, 128)
    chunks.push(y, u, v)
  }
  return Buffer.concat(chunks)
}

/** Deterministic structured test image (smooth gradients plus a checker). */
export function makeImage(width: number, height: number, phase = 0): RgbImage {
  const data = new Uint8Array(width * height * 3)
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const o = (y * width + x) * 3
      const checker = (Math.floor(x / 12) + Math.floor(y / 12)) % 2 ? 60 : 0
      data[o] = (x * 255) / width
      data[o + 1] = ((y + phase) * 255) / height
      data[o + 2] = 100 + checker
    }
  }
  return { width, height, data }
}

/** Save a small deterministic patch model (16x16x3 -> D) as tfjs artifacts. */
export async function saveStubModel(dir: string, dim = 8): Promise<void> {
  const model = tf.sequential({
    layers: [
      tf.layers.flatten({ inputShape: [16, 16, 3] }),
      tf.layers.dense({ units: dim, activation: 'tanh', kernelInitializer: 'glorotNormal' }),
    ],
  })
  // reproducible weights independent of tf's RNG
  const kernel = model.layers[1].getWeights()[0]
  const shape = kernel.shape as [number, number]
  const vals = new Float32Array(shape[0] * shape[1])
  for (let i = 0; i < vals.length; i++) vals[i] = Math.sin(i * 0.37) * 0.1
  model.layers[1].setWeights([tf.tensor2d(vals, shape), tf.zeros([shape[1]])])

  const artifacts = await new Promise<tf.io.ModelArtifacts>(resolve => {
    void model.save(
      tf.io.withSaveHandler(async a => {
        resolve(a)
        return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
      }),
    )
  })
  fs.mkdirSync(dir, { recursive: true })
  const weightData = Buffer.from(artifacts.weightData as ArrayBuffer)
  fs.writeFileSync(path.join(dir, 'weights.bin'), weightData)
  fs.writeFileSync(
    path.join(dir, 'model.json'),
    JSON.stringify({
      modelTopology: artifacts.modelTopology,
      weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
    }),
  )
}
