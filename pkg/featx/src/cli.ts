#!/usr/bin/env node
/**
 * featx --images DIR --out DIR [--manifest out.json] [--weights FILE]
 *       [--seed N]
 *
 * Converts every PNG/JPEG under --images into an MFM1 feature-map file
 * named <stem>.mfm under --out.  Without --weights the conv stack runs
 * with deterministically seeded weights; either way the manifest records
 * the weight digest and preprocessing policy.
 */

import { mkdirSync, readdirSync, writeFileSync } from 'node:fs';
import { extname, join } from 'node:path';
import { parseArgs } from 'node:util';

import { Extractor } from './extract.js';
import { DEFAULT_SEED, loadWeights, seededWeights } from './weights.js';

const IMAGE_EXTENSIONS = new Set(['.png', '.jpg', '.jpeg']);

export async function main(argv: string[]): Promise<number> {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        images: { type: 'string' },
        out: { type: 'string' },
        manifest: { type: 'string' },
        weights: { type: 'string' },
        seed: { type: 'string' },
      },
    }));
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    return 1;
  }
  if (!values.images || !values.out) {
    console.error('usage: featx --images DIR --out DIR [--manifest out.json]'
      + ' [--weights FILE] [--seed N]');
    return 1;
  }
  let entries: string[];
  try {
    entries = readdirSync(values.images)
      .filter(name => IMAGE_EXTENSIONS.has(extname(name).toLowerCase()))
      .sort();
  } catch (err) {
    console.error(`cannot list ${values.images}: ${(err as Error).message}`);
    return 2;
  }
  if (entries.length === 0) {
    console.error(`no images found under ${values.images}`);
    return 2;
  }
  mkdirSync(values.out, { recursive: true });
  const weights = values.weights
    ? loadWeights(values.weights)
    : seededWeights(values.seed ? Number(values.seed) : DEFAULT_SEED);
  const extractor = new Extractor(weights);
  const outputs: Record<string, string> = {};
  try {
    for (const name of entries) {
      const src = join(values.images, name);
      const dst = await extractor.extractToDir(src, values.out);
      outputs[name] = dst;
      console.log(`${name} -> ${dst}`);
    }
    const manifestPath = values.manifest ?? join(values.out, 'manifest.json');
    const manifest = await extractor.manifest(outputs);
    writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n');
    console.log(`manifest -> ${manifestPath}`);
  } catch (err) {
    console.error(`extraction failed: ${(err as Error).message}`);
    return 2;
  } finally {
    extractor.dispose();
  }
  return 0;
}

const invokedDirectly = process.argv[1] &&
  import.meta.url.endsWith(process.argv[1].split('/').pop() as string);
if (invokedDirectly) {
  main(process.argv.slice(2)).then(code => {
    process.exitCode = code;
  });
}
