/**
 * The conv stack: repeated 3x3 same-padding convs with ReLU, a 2x2/2 max
 * pool after each block, stopping at the last pool (7x7x512).  The final
 * ReLU before that pool makes every emitted value nonnegative.
 */

import * as tf from '@tensorflow/tfjs';

import { CONV_BLOCKS, INPUT_SIZE, OUTPUT_COLS, OUTPUT_ROWS, WeightSet } from './weights.js';

let backendReady: Promise<string> | null = null;

/** Prefer the wasm backend (single-threaded for determinism); fall back to
 * the pure-JS cpu backend when wasm cannot initialize. */
export function initBackend(): Promise<string> {
  if (!backendReady) {
    backendReady = (async () => {
      try {
        const wasm = await import('@tensorflow/tfjs-backend-wasm');
        wasm.setThreadsCount(1);
        await tf.setBackend('wasm');
        await tf.ready();
        return tf.getBackend();
      } catch {
        await tf.setBackend('cpu');
        await tf.ready();
        return tf.getBackend();
      }
    })();
  }
  return backendReady;
}

export class FeatureNetwork {
  private kernels: tf.Tensor4D[] = [];
  private biases: tf.Tensor1D[] = [];
  readonly weights: WeightSet;

  constructor(weights: WeightSet) {
    this.weights = weights;
    for (const layer of weights.layers) {
      this.kernels.push(tf.tensor4d(layer.kernel, layer.shape));
      this.biases.push(tf.tensor1d(layer.bias));
    }
  }

  /** normalized [224, 224, 3] pixels -> row-major [49, 512] features. */
  async extract(pixels: Float32Array): Promise<Float32Array> {
    await initBackend();
    const out = tf.tidy(() => {
      let x: tf.Tensor4D = tf.tensor4d(pixels, [1, INPUT_SIZE, INPUT_SIZE, 3]);
      let li = 0;
      for (const [, repeats] of CONV_BLOCKS) {
        for (let i = 0; i < repeats; i++) {
          const pre = tf.add(tf.conv2d(x, this.kernels[li], 1, 'same'),
                             this.biases[li]) as tf.Tensor4D;
          x = tf.relu(pre);
          li++;
        }
        x = tf.maxPool(x, 2, 2, 'same');
      }
      // [1, 7, 7, 512] -> one 512-channel row per spatial region
      return tf.reshape(x, [OUTPUT_ROWS, OUTPUT_COLS]);
    });
    const values = new Float32Array(await out.data());
    out.dispose();
    return values;
  }

  dispose(): void {
    this.kernels.forEach(t => t.dispose());
    this.biases.forEach(t => t.dispose());
  }
}
