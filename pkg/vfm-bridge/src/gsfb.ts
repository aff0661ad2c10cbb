/** GSFB feature-bank serialization, bit-compatible with the core reader.

Layout (little-endian):
  "GSFB" | u32 version=1 | u16 name_len | name (UTF-8)
  | u32 dim | u64 count
  | count records of: u32 source_view | u32 patch_index | dim * f32
*/

import { DataError } from './errors'

export interface BankRecord {
  sourceView: number
  patchIndex: number
  vector: Float32Array
}

export function writeBank(records: BankRecord[], extractor: string): Buffer {
  if (records.length === 0) throw new DataError('refusing to write an empty bank')
  const dim = records[0].vector.length
  for (const r of records) {
    if (r.vector.length !== dim) throw new DataError('inconsistent feature dimensions')
  }
  const name = Buffer.from(extractor, 'utf-8')
  const header = Buffer.alloc(4 + 4 + 2 + name.length + 4 + 8)
  let off = header.write('GSFB', 0, 'ascii')
  off = header.writeUInt32LE(1, off)
  off = header.writeUInt16LE(name.length, off)
  off += name.copy(header, off)
  off = header.writeUInt32LE(dim, off)
  header.writeBigUInt64LE(BigInt(records.length), off)

  const recSize = 8 + 4 * dim
  const body = Buffer.alloc(recSize * records.length)
  records.forEach((r, i) => {
    let o = body.writeUInt32LE(r.sourceView >>> 0, i * recSize)
    o = body.writeUInt32LE(r.patchIndex >>> 0, o)
    for (let j = 0; j < dim; j++) o = body.writeFloatLE(r.vector[j], o)
  })
  return Buffer.concat([header, body])
}
