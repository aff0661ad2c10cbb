/** Feature extraction: center-crop each image, split into a 16x16 grid of
16 px patches, run the model per patch, and export a GSFB bank. */

import fs from 'node:fs'
import path from 'node:path'

import { DataError } from './errors'
import { BankRecord, writeBank } from './gsfb'
import { centerCrop, decodePpm, RgbImage } from './image'
import { GRID, PATCH, PatchModel } from './model'

const CROP = GRID * PATCH // 256

/** Patches in row-major grid order as one [GRID*GRID, 16, 16, 3] batch. */
export function cropToPatches(img: RgbImage): Float32Array {
  const crop = centerCrop(img, CROP)
  const out = new Float32Array(GRID * GRID * PATCH * PATCH * 3)
  for (let gy = 0; gy < GRID; gy++) {
    for (let gx = 0; gx < GRID; gx++) {
      const base = (gy * GRID + gx) * PATCH * PATCH * 3
      for (let py = 0; py < PATCH; py++) {
        for (let px = 0; px < PATCH; px++) {
          const src = ((gy * PATCH + py) * CROP + gx * PATCH + px) * 3
          const dst = base + (py * PATCH + px) * 3
          out[dst] = crop.data[src] / 255
          out[dst + 1] = crop.data[src + 1] / 255
          out[dst + 2] = crop.data[src + 2] / 255
        }
      }
    }
  }
  return out
}

export function extractBank(images: RgbImage[], model: PatchModel): Buffer {
  if (images.length === 0) throw new DataError('no input images')
  const records: BankRecord[] = []
  images.forEach((img, viewIndex) => {
    const features = model.run(cropToPatches(img), GRID * GRID)
    for (let p = 0; p < GRID * GRID; p++) {
      records.push({
        sourceView: viewIndex,
        patchIndex: p,
        vector: features.slice(p * model.dim, (p + 1) * model.dim),
      })
    }
  })
  return writeBank(records, model.extractorName)
}

export function listImages(dir: string): string[] {
  let names: string[]
  try {
    names = fs.readdirSync(dir)
  } catch (err) {
    throw new DataError(`cannot read image directory ${dir}: ${(err as Error).message}`)
  }
  const files = names.filter(n => n.toLowerCase().endsWith('.ppm')).sort()
  if (files.length === 0) throw new DataError(`no .ppm images found in ${dir}`)
  return files.map(n => path.join(dir, n))
}

export function loadImages(paths: string[]): RgbImage[] {
  return paths.map(p => {
    try {
      return decodePpm(fs.readFileSync(p))
    } catch (err) {
      if (err instanceof DataError) throw new DataError(`${p}: ${err.message}`)
      throw new DataError(`cannot read image ${p}: ${(err as Error).message}`)
    }
  })
}
