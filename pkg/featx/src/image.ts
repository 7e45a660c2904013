/**
 * Image decode and preprocessing: PNG/JPEG to RGBA, then plain bilinear
 * resize to 224x224 (no crop: meme text hugs the borders) and per-channel
 * mean subtraction using the classic ImageNet RGB means.
 */

import { readFileSync } from 'node:fs';
import jpeg from 'jpeg-js';
import { PNG } from 'pngjs';

import { INPUT_SIZE } from './weights.js';

export const RGB_MEANS = [123.68, 116.779, 103.939];

export interface Rgba {
  width: number;
  height: number;
  data: Uint8Array; // RGBA, row-major
}

export function decodeImage(path: string): Rgba {
  let buf: Buffer;
  try {
    buf = readFileSync(path);
  } catch (err) {
    throw new Error(`cannot read image ${path}: ${(err as Error).message}`);
  }
  try {
    if (buf.length >= 8 && buf[0] === 0x89 && buf[1] === 0x50) {
      const png = PNG.sync.read(buf);
      return { width: png.width, height: png.height,
               data: new Uint8Array(png.data) };
    }
    if (buf.length >= 3 && buf[0] === 0xff && buf[1] === 0xd8) {
      const img = jpeg.decode(buf, { useTArray: true, maxMemoryUsageInMB: 1024 });
      return { width: img.width, height: img.height,
               data: new Uint8Array(img.data) };
    }
  } catch (err) {
    throw new Error(`cannot decode image ${path}: ${(err as Error).message}`);
  }
  throw new Error(`cannot decode image ${path}: not a PNG or JPEG`);
}

/** RGBA -> normalized RGB Float32Array [size, size, 3]. */
export function preprocess(image: Rgba, size: number = INPUT_SIZE): Float32Array {
  const { width, height, data } = image;
  const out = new Float32Array(size * size * 3);
  const xScale = width / size;
  const yScale = height / size;
  for (let y = 0; y < size; y++) {
    // sample at pixel centers, clamped to the source frame
    const sy = Math.min(Math.max((y + 0.5) * yScale - 0.5, 0), height - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, height - 1);
    const fy = sy - y0;
    for (let x = 0; x < size; x++) {
      const sx = Math.min(Math.max((x + 0.5) * xScale - 0.5, 0), width - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, width - 1);
      const fx = sx - x0;
      for (let c = 0; c < 3; c++) {
        const v00 = data[(y0 * width + x0) * 4 + c];
        const v01 = data[(y0 * width + x1) * 4 + c];
        const v10 = data[(y1 * width + x0) * 4 + c];
        const v11 = data[(y1 * width + x1) * 4 + c];
        const top = v00 + (v01 - v00) * fx;
        const bottom = v10 + (v11 - v10) * fx;
        out[(y * size + x) * 3 + c] = top + (bottom - top) * fy - RGB_MEANS[c];
      }
    }
  }
  return out;
}
