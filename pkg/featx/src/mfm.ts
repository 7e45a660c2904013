/**
 * MFM1 feature-map files: magic "MFM1", two little-endian uint32 extents
 * (rows, cols), then rows*cols little-endian float32 values, row-major.
 */

import { readFileSync, writeFileSync } from 'node:fs';

export const MFM_MAGIC = 'MFM1';

export function encodeMfm(rows: number, cols: number, values: Float32Array): Buffer {
  if (values.length !== rows * cols) {
    throw new Error(`expected ${rows * cols} values, got ${values.length}`);
  }
  const buf = Buffer.alloc(12 + values.length * 4);
  buf.write(MFM_MAGIC, 0, 'ascii');
  buf.writeUInt32LE(rows, 4);
  buf.writeUInt32LE(cols, 8);
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], 12 + 4 * i);
  }
  return buf;
}

export function writeMfm(path: string, rows: number, cols: number,
                         values: Float32Array): void {
  writeFileSync(path, encodeMfm(rows, cols, values));
}

export interface MfmData {
  rows: number;
  cols: number;
  values: Float32Array;
}

export function readMfm(path: string): MfmData {
  const buf = readFileSync(path);
  if (buf.length < 12 || buf.toString('ascii', 0, 4) !== MFM_MAGIC) {
    throw new Error(`${path}: not an MFM1 file`);
  }
  const rows = buf.readUInt32LE(4);
  const cols = buf.readUInt32LE(8);
  if (buf.length !== 12 + rows * cols * 4) {
    throw new Error(`${path}: truncated payload`);
  }
  const values = new Float32Array(rows * cols);
  for (let i = 0; i < values.length; i++) {
    values[i] = buf.readFloatLE(12 + 4 * i);
  }
  return { rows, cols, values };
}
