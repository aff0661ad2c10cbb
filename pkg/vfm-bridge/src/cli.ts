/** Command-line interface.

  vfm-bridge frames  --video clip.y4m --fps 1 --out frames/
  vfm-bridge extract --model dino|clip|vit|<dir> --images frames/ --out bank.gsfb

Exit codes: 0 success, 1 usage, 2 data error, 3 model failure.
*/

import fs from 'node:fs'

import { exitCodeFor, UsageError } from './errors'
import { extractBank, listImages, loadImages } from './extract'
import { sampleFramesToDir } from './frames'
import { loadPatchModel } from './model'

const USAGE = `usage:
  vfm-bridge frames  --video <file.y4m> --fps <n> --out <dir>
  vfm-bridge extract --model <name-or-dir> --images <dir> --out <file.gsfb>`

function parseFlags(argv: string[], allowed: string[]): Map<string, string> {
  const flags = new Map<string, string>()
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    if (!allowed.includes(key)) throw new UsageError(`unknown flag ${key}`)
    if (i + 1 >= argv.length) throw new UsageError(`missing value for ${key}`)
    flags.set(key, argv[i + 1])
  }
  return flags
}

function required(flags: Map<string, string>, key: string): string {
  const v = flags.get(key)
  if (v === undefined) throw new UsageError(`missing required flag ${key}`)
  return v
}

export async function run(argv: string[]): Promise<number> {
  try {
    switch (argv[0]) {
      case 'frames': {
        const flags = parseFlags(argv.slice(1), ['--video', '--fps', '--out'])
        const fps = Number(flags.get('--fps') ?? '1')
        if (!Number.isFinite(fps) || fps <= 0) throw new UsageError('--fps must be > 0')
        const files = sampleFramesToDir(required(flags, '--video'), fps, required(flags, '--out'))
        console.log(`wrote ${files.length} frames to ${flags.get('--out')}`)
        return 0
      }
      case 'extract': {
        const flags = parseFlags(argv.slice(1), ['--model', '--images', '--out'])
        const model = await loadPatchModel(required(flags, '--model'))
        const images = loadImages(listImages(required(flags, '--images')))
        const bank = extractBank(images, model)
        fs.writeFileSync(required(flags, '--out'), bank)
        console.log(
          `wrote ${flags.get('--out')}: ${images.length} views, dim ${model.dim}, ` +
            `extractor ${model.extractorName}`,
        )
        return 0
      }
      default:
        throw new UsageError(argv[0] ? `unknown subcommand ${argv[0]}` : 'missing subcommand')
    }
  } catch (err) {
    const code = exitCodeFor(err)
    console.error(`error: ${(err as Error).message}`)
    if (code === 1) console.error(USAGE)
    return code
  }
}
