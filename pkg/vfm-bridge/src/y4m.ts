/** YUV4MPEG2 (.y4m) parsing and YUV -> RGB conversion (BT.601 studio swing).

Supports the common planar layouts: 4:2:0 (all chroma siting variants),
4:2:2, 4:4:4, and mono. */

import { DataError } from './errors'
import { RgbImage } from './image'

export interface Y4mVideo {
  width: number
  height: number
  fpsNum: number
  fpsDen: number
  frames: RgbImage[]
}

const MAGIC = 'YUV4MPEG2'

export function parseY4m(buf: Buffer): Y4mVideo {
  const headerEnd = buf.indexOf(0x0a)
  if (headerEnd < 0 || buf.toString('ascii', 0, MAGIC.length) !== MAGIC) {
    throw new DataError('not a YUV4MPEG2 stream')
  }
  let width = 0
  let height = 0
  let fpsNum = 0
  let fpsDen = 0
  let colorspace = 'C420'
  for (const tag of buf.toString('ascii', MAGIC.length, headerEnd).trim().split(/\s+/)) {
    if (!tag) continue
    const value = tag.slice(1)
    switch (tag[0]) {
      case 'W':
        width = parsePositiveInt(value, 'width')
        break
      case 'H':
        height = parsePositiveInt(value, 'height')
        break
      case 'F': {
        const m = value.match(/^(\d+):(\d+)$/)
        if (!m) throw new DataError(`bad frame rate tag ${tag}`)
        fpsNum = parsePositiveInt(m[1], 'frame rate numerator')
        fpsDen = parsePositiveInt(m[2], 'frame rate denominator')
        break
      }
      case 'C':
        colorspace = tag
        break
      default:
        break // interlacing / aspect tags are irrelevant to sampling
    }
  }
  if (!width || !height) throw new DataError('missing W/H in stream header')
  if (!fpsNum || !fpsDen) throw new DataError('missing F (frame rate) in stream header')

  const [cw, ch, planes] = chromaLayout(colorspace, width, height)
  const frameBytes = width * height + 2 * cw * ch * (planes === 1 ? 0 : 1)

  const frames: RgbImage[] = []
  let pos = headerEnd + 1
  while (pos < buf.length) {
    const lineEnd = buf.indexOf(0x0a, pos)
    if (lineEnd < 0 || buf.toString('ascii', pos, pos + 5) !== 'FRAME') {
      throw new DataError(`bad FRAME marker at byte ${pos}`)
    }
    pos = lineEnd + 1
    if (pos + frameBytes > buf.length) {
      throw new DataError(`truncated frame ${frames.length}: need ${frameBytes} bytes`)
    }
    const y = buf.subarray(pos, pos + width * height)
    const u = buf.subarray(pos + width * height, pos + width * height + cw * ch)
    const v = buf.subarray(pos + width * height + cw * ch, pos + frameBytes)
    frames.push(toRgb(y, u, v, width, height, cw, ch, planes === 1))
    pos += frameBytes
  }
  if (frames.length === 0) throw new DataError('stream contains no frames')
  return { width, height, fpsNum, fpsDen, frames }
}

function parsePositiveInt(s: string, what: string): number {
  const v = Number(s)
  if (!Number.isInteger(v) || v <= 0) throw new DataError(`bad ${what}: ${s}`)
  return v
}

function chromaLayout(tag: string, w: number, h: number): [number, number, number] {
  if (tag.startsWith('C420')) return [Math.ceil(w / 2), Math.ceil(h / 2), 3]
  if (tag.startsWith('C422')) return [Math.ceil(w / 2), h, 3]
  if (tag.startsWith('C444')) return [w, h, 3]
  if (tag.startsWith('Cmono')) return [0, 0, 1]
  throw new DataError(`unsupported colorspace ${tag}`)
}

function toRgb(
  y: Uint8Array,
  u: Uint8Array,
  v: Uint8Array,
  width: number,
  height: number,
  cw: number,
  ch: number,
  mono: boolean,
): RgbImage {
  const data = new Uint8Array(width * height * 3)
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      const yy = 1.164383 * (y[r * width + c] - 16)
      let rr = yy
      let gg = yy
      let bb = yy
      if (!mono) {
        const ci = Math.min(Math.floor((c * cw) / width), cw - 1)
        const ri = Math.min(Math.floor((r * ch) / height), ch - 1)
        const cb = u[ri * cw + ci] - 128
        const cr = v[ri * cw + ci] - 128
        rr += 1.596027 * cr
        gg += -0.391762 * cb - 0.812968 * cr
        bb += 2.017232 * cb
      }
      const o = (r * width + c) * 3
      data[o] = clamp8(rr)
      data[o + 1] = clamp8(gg)
      data[o + 2] = clamp8(bb)
    }
  }
  return { width, height, data }
}

function clamp8(v: number): number {
  return v < 0 ? 0 : v > 255 ? 255 : Math.round(v)
}
