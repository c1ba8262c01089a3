/**
 * Offline fitting utility: build a model file from the toolkit's TSV
 * dataset formats (triples: head<TAB>relation<TAB>tail; metadata:
 * entity<TAB>type1,type2,...<TAB>description).
 *
 *   node dist/src/fit.js --triples data.tsv [--metadata meta.tsv] --out model.json
 */

import * as fs from 'node:fs';

import { fitModel } from './model';

export function parseTriplesTsv(content: string): Array<[string, string, string]> {
  const out: Array<[string, string, string]> = [];
  content.split('\n').forEach((line, index) => {
    const stripped = line.replace(/\r$/, '');
    if (stripped.trim() === '') return;
    const fields = stripped.split('\t');
    if (fields.length !== 3) {
      throw new Error(`line ${index + 1}: expected 3 tab-separated fields, got ${fields.length}`);
    }
    const [h, r, t] = fields.map((f) => f.trim());
    if (!h || !r || !t) throw new Error(`line ${index + 1}: empty field in triple`);
    out.push([h, r, t]);
  });
  return out;
}

export function parseMetadataTsv(
  content: string,
): Map<string, { types: string[]; description: string }> {
  const out = new Map<string, { types: string[]; description: string }>();
  content.split('\n').forEach((line, index) => {
    const stripped = line.replace(/\r$/, '');
    if (stripped.trim() === '') return;
    const fields = stripped.split('\t');
    if (fields.length !== 3) {
      throw new Error(`line ${index + 1}: expected 3 tab-separated fields, got ${fields.length}`);
    }
    const entity = fields[0].trim();
    if (!entity) throw new Error(`line ${index + 1}: empty entity label`);
    const types = fields[1]
      .split(',')
      .map((t) => t.trim())
      .filter((t) => t.length > 0);
    out.set(entity, { types, description: fields[2].trim() });
  });
  return out;
}

function getFlag(argv: string[], name: string): string | undefined {
  const idx = argv.indexOf(name);
  return idx >= 0 && idx + 1 < argv.length ? argv[idx + 1] : undefined;
}

export function main(argv: string[]): number {
  const triplesPath = getFlag(argv, '--triples');
  const out = getFlag(argv, '--out');
  if (!triplesPath || !out) {
    process.stderr.write('usage: fit --triples data.tsv [--metadata meta.tsv] --out model.json\n');
    return 2;
  }
  const metadataPath = getFlag(argv, '--metadata');
  const smoothing = Number(getFlag(argv, '--smoothing') ?? '0.1');
  const triples = parseTriplesTsv(fs.readFileSync(triplesPath, 'utf-8'));
  const metadata = metadataPath
    ? parseMetadataTsv(fs.readFileSync(metadataPath, 'utf-8'))
    : new Map<string, { types: string[]; description: string }>();
  const model = fitModel(triples, metadata, smoothing);
  fs.writeFileSync(out, JSON.stringify(model));
  process.stdout.write(
    `fit ${triples.length} triples: vocab ${model.vocab.length}, relations ${model.relations.length} -> ${out}\n`,
  );
  return 0;
}

if (require.main === module) {
  process.exitCode = main(process.argv.slice(2));
}
