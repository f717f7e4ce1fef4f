/**
 * NPY v1.0 subset, bit-exact with the depthcal reader/writer: little-endian
 * float32/float64, C order, header padded with spaces so the preamble is a
 * multiple of 64 bytes. Anything outside the subset is a parse error.
 */

import { promises as fs } from 'fs'

const MAGIC = Buffer.from('\x93NUMPY', 'latin1')

export type NpyDtype = '<f4' | '<f8'

export interface NpyArray {
  dtype: NpyDtype
  shape: number[]
  data: Float64Array // always widened to f64 on read
}

function shapeRepr(shape: number[]): string {
  if (shape.length === 0) return '()'
  if (shape.length === 1) return `(${shape[0]},)`
  return `(${shape.join(', ')})`
}

export async function writeNpy(
  path: string,
  data: ArrayLike<number>,
  shape: number[],
  dtype: NpyDtype = '<f4',
): Promise<void> {
  const count = shape.reduce((a, b) => a * b, 1)
  if (count !== data.length) {
    throw new Error(`writeNpy: shape ${shapeRepr(shape)} does not match length ${data.length}`)
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) throw new Error('writeNpy: values must be finite')
  }
  let header = `{'descr': '${dtype}', 'fortran_order': False, 'shape': ${shapeRepr(shape)}, }`
  const unpadded = MAGIC.length + 2 + 2 + header.length + 1
  const pad = (64 - (unpadded % 64)) % 64
  header = header + ' '.repeat(pad) + '\n'

  const itemsize = dtype === '<f4' ? 4 : 8
  const payload = Buffer.alloc(count * itemsize)
  for (let i = 0; i < count; i++) {
    if (dtype === '<f4') payload.writeFloatLE(Math.fround(data[i]), i * 4)
    else payload.writeDoubleLE(data[i], i * 8)
  }
  const head = Buffer.alloc(MAGIC.length + 2 + 2)
  MAGIC.copy(head, 0)
  head[6] = 1
  head[7] = 0
  head.writeUInt16LE(header.length, 8)
  await fs.writeFile(path, Buffer.concat([head, Buffer.from(header, 'latin1'), payload]))
}

export async function readNpy(path: string): Promise<NpyArray> {
  const buf = await fs.readFile(path)
  if (buf.length < 10 || !buf.subarray(0, 6).equals(MAGIC)) {
    throw new Error(`${path}: not an NPY file (bad magic bytes)`)
  }
  if (buf[6] !== 1) throw new Error(`${path}: unsupported NPY version ${buf[6]}.${buf[7]}`)
  const hlen = buf.readUInt16LE(8)
  const header = buf.subarray(10, 10 + hlen).toString('latin1')
  const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1]
  const fortran = /'fortran_order':\s*(True|False)/.exec(header)?.[1]
  const shapeStr = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1]
  if (descr !== '<f4' && descr !== '<f8') {
    throw new Error(`${path}: unsupported dtype ${descr}; only <f4/<f8 accepted`)
  }
  if (fortran !== 'False') throw new Error(`${path}: Fortran order is not supported`)
  if (shapeStr === undefined) throw new Error(`${path}: malformed NPY header`)
  const shape = shapeStr
    .split(',')
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => {
      const n = Number(s)
      if (!Number.isInteger(n) || n < 0) throw new Error(`${path}: malformed shape`)
      return n
    })
  const count = shape.reduce((a, b) => a * b, 1)
  const itemsize = descr === '<f4' ? 4 : 8
  const payload = buf.subarray(10 + hlen)
  if (payload.length !== count * itemsize) {
    throw new Error(`${path}: payload is ${payload.length} bytes, expected ${count * itemsize}`)
  }
  const data = new Float64Array(count)
  for (let i = 0; i < count; i++) {
    data[i] = descr === '<f4' ? payload.readFloatLE(i * 4) : payload.readDoubleLE(i * 8)
  }
  return { dtype: descr, shape, data }
}
