/** Minimal 8-bit RGB image type plus binary PPM (P6) encode/decode.

PPM is used for frames and accepted as extraction input because it is
self-describing, byte-exact, and readable by common imaging libraries. */

import { DataError } from './errors'

export interface RgbImage {
  width: number
  height: number
  /** Interleaved RGB, row-major, length = width * height * 3. */
  data: Uint8Array
}

export function encodePpm(img: RgbImage): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, 'ascii')
  return Buffer.concat([header, Buffer.from(img.data)])
}

export function decodePpm(buf: Buffer): RgbImage {
  // Header: "P6", whitespace-separated width, height, maxval, single
  // whitespace byte, then raw pixel data. Comments (#...) allowed.
  if (buf.length < 2 || buf.toString('ascii', 0, 2) !== 'P6') {
    throw new DataError('not a binary PPM (missing P6 magic)')
  }
  let pos = 2
  const fields: number[] = []
  while (fields.length < 3) {
    while (pos < buf.length && isSpace(buf[pos])) pos++
    if (pos < buf.length && buf[pos] === 0x23) {
      while (pos < buf.length && buf[pos] !== 0x0a) pos++
      continue
    }
    let start = pos
    while (pos < buf.length && !isSpace(buf[pos])) pos++
    const token = buf.toString('ascii', start, pos)
    const value = Number(token)
    if (!Number.isInteger(value) || value < 0) {
      throw new DataError(`bad PPM header token ${JSON.stringify(token)}`)
    }
    fields.push(value)
  }
  pos++ // single whitespace after maxval
  const [width, height, maxval] = fields
  if (maxval !== 255) throw new DataError(`unsupported PPM maxval ${maxval}`)
  const need = width * height * 3
  if (buf.length - pos < need) {
    throw new DataError(`truncated PPM: need ${need} pixel bytes, have ${buf.length - pos}`)
  }
  return { width, height, data: new Uint8Array(buf.subarray(pos, pos + need)) }
}

function isSpace(b: number): boolean {
  return b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d
}

/** Bilinear resize; used to bring small images up to the crop size. */
export function resize(img: RgbImage, width: number, height: number): RgbImage {
  const out = new Uint8Array(width * height * 3)
  for (let y = 0; y < height; y++) {
    // align_corners=false convention: sample at pixel centers
    const sy = Math.min(Math.max(((y + 0.5) * img.height) / height - 0.5, 0), img.height - 1)
    const y0 = Math.floor(sy)
    const y1 = Math.min(y0 + 1, img.height - 1)
    const fy = sy - y0
    for (let x = 0; x < width; x++) {
      const sx = Math.min(Math.max(((x + 0.5) * img.width) / width - 0.5, 0), img.width - 1)
      const x0 = Math.floor(sx)
      const x1 = Math.min(x0 + 1, img.width - 1)
      const fx = sx - x0
      for (let c = 0; c < 3; c++) {
        const v =
          img.data[(y0 * img.width + x0) * 3 + c] * (1 - fy) * (1 - fx) +
          img.data[(y0 * img.width + x1) * 3 + c] * (1 - fy) * fx +
          img.data[(y1 * img.width + x0) * 3 + c] * fy * (1 - fx) +
          img.data[(y1 * img.width + x1) * 3 + c] * fy * fx
        out[(y * width + x) * 3 + c] = Math.round(v)
      }
    }
  }
  return { width, height, data: out }
}

/** Center crop after upscaling images whose short side is below `size`. */
export function centerCrop(img: RgbImage, size: number): RgbImage {
  let src = img
  const short = Math.min(img.width, img.height)
  if (short < size) {
    const s = size / short
    src = resize(img, Math.max(Math.round(img.width * s), size), Math.max(Math.round(img.height * s), size))
  }
  const x0 = Math.floor((src.width - size) / 2)
  const y0 = Math.floor((src.height - size) / 2)
  const out = new Uint8Array(size * size * 3)
  for (let y = 0; y < size; y++) {
    const row = src.data.subarray(((y0 + y) * src.width + x0) * 3, ((y0 + y) * src.width + x0 + size) * 3)
    out.set(row, y * size * 3)
  }
  return { width: size, height: size, data: out }
}
