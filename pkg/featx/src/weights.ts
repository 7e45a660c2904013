/**
 * Conv-stack weights: either loaded from an exported checkpoint file or
 * generated from a seeded PRNG so extraction stays deterministic when no
 * pretrained checkpoint is available.  The sha256 digest of the exact
 * float bytes is pinned in every extraction manifest.
 *
 * Checkpoint file format (FXW1): magic "FXW1", uint32 LE layer count,
 * then per conv layer: four uint32 LE kernel dims [kh, kw, inCh, outCh],
 * kh*kw*inCh*outCh float32 LE kernel values, uint32 LE bias length,
 * float32 LE bias values.
 */

import { createHash } from 'node:crypto';
import { readFileSync } from 'node:fs';

/** VGG19 feature topology: [channels, repeated 3x3 convs] per block,
 * each block followed by a 2x2/2 max pool; five pools take 224 -> 7. */
export const CONV_BLOCKS: Array<[number, number]> = [
  [64, 2], [128, 2], [256, 4], [512, 4], [512, 4],
];

export const INPUT_SIZE = 224;
export const OUTPUT_ROWS = 49;
export const OUTPUT_COLS = 512;
export const DEFAULT_SEED = 1000003;

export interface ConvLayer {
  kernel: Float32Array;            // [3, 3, inCh, outCh], row-major
  bias: Float32Array;              // [outCh]
  shape: [number, number, number, number];
}

export interface WeightSet {
  layers: ConvLayer[];
  source: string;                  // provenance tag for the manifest
  sha256: string;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Box-Muller normals, He-scaled for a 3x3 conv fan-in. */
function fillGaussian(out: Float32Array, rand: () => number, scale: number): void {
  for (let i = 0; i < out.length; i += 2) {
    const u1 = Math.max(rand(), 1e-12);
    const u2 = rand();
    const r = Math.sqrt(-2 * Math.log(u1));
    out[i] = r * Math.cos(2 * Math.PI * u2) * scale;
    if (i + 1 < out.length) {
      out[i + 1] = r * Math.sin(2 * Math.PI * u2) * scale;
    }
  }
}

function digestOf(layers: ConvLayer[]): string {
  const hash = createHash('sha256');
  for (const layer of layers) {
    hash.update(Buffer.from(layer.kernel.buffer, layer.kernel.byteOffset,
                            layer.kernel.byteLength));
    hash.update(Buffer.from(layer.bias.buffer, layer.bias.byteOffset,
                            layer.bias.byteLength));
  }
  return hash.digest('hex');
}

export function seededWeights(seed: number = DEFAULT_SEED): WeightSet {
  const rand = mulberry32(seed);
  const layers: ConvLayer[] = [];
  let inCh = 3;
  for (const [outCh, repeats] of CONV_BLOCKS) {
    for (let i = 0; i < repeats; i++) {
      const kernel = new Float32Array(3 * 3 * inCh * outCh);
      fillGaussian(kernel, rand, Math.sqrt(2 / (3 * 3 * inCh)));
      const bias = new Float32Array(outCh); // zeros
      layers.push({ kernel, bias, shape: [3, 3, inCh, outCh] });
      inCh = outCh;
    }
  }
  return { layers, source: `seeded:${seed}`, sha256: digestOf(layers) };
}

export function loadWeights(path: string): WeightSet {
  const buf = readFileSync(path);
  if (buf.length < 8 || buf.toString('ascii', 0, 4) !== 'FXW1') {
    throw new Error(`${path}: not an FXW1 weight file`);
  }
  let off = 4;
  const count = buf.readUInt32LE(off);
  off += 4;
  const expected = CONV_BLOCKS.reduce((n, [, r]) => n + r, 0);
  if (count !== expected) {
    throw new Error(`${path}: ${count} layers, topology needs ${expected}`);
  }
  const layers: ConvLayer[] = [];
  for (let li = 0; li < count; li++) {
    const dims: number[] = [];
    for (let d = 0; d < 4; d++) {
      dims.push(buf.readUInt32LE(off));
      off += 4;
    }
    const kLen = dims[0] * dims[1] * dims[2] * dims[3];
    const kernel = new Float32Array(kLen);
    for (let i = 0; i < kLen; i++) {
      kernel[i] = buf.readFloatLE(off);
      off += 4;
    }
    const bLen = buf.readUInt32LE(off);
    off += 4;
    const bias = new Float32Array(bLen);
    for (let i = 0; i < bLen; i++) {
      bias[i] = buf.readFloatLE(off);
      off += 4;
    }
    layers.push({ kernel, bias, shape: dims as [number, number, number, number] });
  }
  return { layers, source: `file:${path}`, sha256: digestOf(layers) };
}
