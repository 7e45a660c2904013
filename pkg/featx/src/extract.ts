/**
 * Extraction jobs: every input image becomes <stem>.mfm in the output
 * directory, plus a manifest pinning the weight provenance and the
 * preprocessing policy so a file set can be reproduced exactly.
 */

import { writeFileSync } from 'node:fs';
import { basename, extname, join } from 'node:path';

import { decodeImage, preprocess, RGB_MEANS } from './image.js';
import { encodeMfm } from './mfm.js';
import { FeatureNetwork, initBackend } from './network.js';
import { INPUT_SIZE, OUTPUT_COLS, OUTPUT_ROWS, WeightSet } from './weights.js';

export interface ExtractionManifest {
  tool: string;
  weights: { source: string; sha256: string };
  backend: string;
  resize: string;
  normalization: string;
  outputs: Record<string, string>;
}

export class Extractor {
  private network: FeatureNetwork;

  constructor(weights: WeightSet) {
    this.network = new FeatureNetwork(weights);
  }

  get weights(): WeightSet {
    return this.network.weights;
  }

  async extractBuffer(imagePath: string): Promise<Buffer> {
    const pixels = preprocess(decodeImage(imagePath));
    const values = await this.network.extract(pixels);
    for (const v of values) {
      if (!Number.isFinite(v)) {
        throw new Error(`${imagePath}: non-finite feature value produced`);
      }
    }
    return encodeMfm(OUTPUT_ROWS, OUTPUT_COLS, values);
  }

  /** Returns the output file path. */
  async extractToDir(imagePath: string, outDir: string): Promise<string> {
    const stem = basename(imagePath, extname(imagePath));
    const outPath = join(outDir, `${stem}.mfm`);
    writeFileSync(outPath, await this.extractBuffer(imagePath));
    return outPath;
  }

  async manifest(outputs: Record<string, string>): Promise<ExtractionManifest> {
    return {
      tool: 'featx 0.1.0',
      weights: { source: this.weights.source, sha256: this.weights.sha256 },
      backend: await initBackend(),
      resize: `bilinear ${INPUT_SIZE}x${INPUT_SIZE}, no crop, half-pixel centers`,
      normalization: `rgb mean subtraction [${RGB_MEANS.join(', ')}]`,
      outputs,
    };
  }

  dispose(): void {
    this.network.dispose();
  }
}
