/** Frame sampling: pull one frame every 1/fps seconds from a video. */

import fs from 'node:fs'
import path from 'node:path'

import { DataError } from './errors'
import { encodePpm, RgbImage } from './image'
import { parseY4m } from './y4m'

/** Frames at t = 0, 1/fps, 2/fps, ... for t < duration (3 s @ 1 fps -> 3). */
export function sampleFrames(video: Buffer, fps: number): RgbImage[] {
  const { frames, fpsNum, fpsDen } = parseY4m(video)
  const duration = (frames.length * fpsDen) / fpsNum
  const out: RgbImage[] = []
  for (let k = 0; k * (1 / fps) < duration - 1e-9; k++) {
    const index = Math.min(Math.round((k / fps) * (fpsNum / fpsDen)), frames.length - 1)
    out.push(frames[index])
  }
  return out
}

/** Sample a video file and write frame_NNNN.ppm files; returns their paths. */
export function sampleFramesToDir(videoPath: string, fps: number, outDir: string): string[] {
  let data: Buffer
  try {
    data = fs.readFileSync(videoPath)
  } catch (err) {
    throw new DataError(`cannot read video ${videoPath}: ${(err as Error).message}`)
  }
  const frames = sampleFrames(data, fps)
  fs.mkdirSync(outDir, { recursive: true })
  return frames.map((frame, i) => {
    const file = path.join(outDir, `frame_${String(i).padStart(4, '0')}.ppm`)
    fs.writeFileSync(file, encodePpm(frame))
    return file
  })
}
