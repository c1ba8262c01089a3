/**
 * Deterministic stand-ins for the two model heads behind the protocol.
 *
 * Generative head: an additively smoothed character bigram model over
 * entity surface forms. The next-token distribution conditions on the last
 * generated character (start marker when the prefix is empty) and is an
 * exact log-softmax over the whole vocabulary, so log-sum-exp is 0 to
 * floating-point precision.
 *
 * Property head: per-relation prototype vectors of character-bigram
 * features collected from the training heads' rendered text; a request is
 * scored by cosine similarity, which for non-negative features lands in
 * [0, 1] by construction.
 */

export const END_TOKEN = '</s>';
export const START_CONTEXT = '^';
export const GLOBAL_CONTEXT = '*';

export interface ModelFile {
  format: 'kgic-refserver-model';
  version: 1;
  vocab: string[];
  relations: string[];
  smoothing: number;
  bigrams: Record<string, Record<string, number>>;
  relationFeatures: Record<string, Record<string, number>>;
}

function l2Normalize(vec: Record<string, number>): Record<string, number> {
  let sq = 0;
  for (const v of Object.values(vec)) sq += v * v;
  if (sq === 0) return {};
  const norm = Math.sqrt(sq);
  const out: Record<string, number> = {};
  for (const [k, v] of Object.entries(vec)) out[k] = v / norm;
  return out;
}

export function charBigramFeatures(text: string): Record<string, number> {
  const lower = text.toLowerCase();
  const out: Record<string, number> = {};
  for (let i = 0; i + 1 < lower.length; i += 1) {
    const gram = lower.slice(i, i + 2);
    out[gram] = (out[gram] ?? 0) + 1;
  }
  return out;
}

export class RefModel {
  readonly vocab: string[];
  readonly relations: string[];
  private readonly smoothing: number;
  private readonly bigrams: Record<string, Record<string, number>>;
  private readonly prototypes: Map<string, Record<string, number>>;

  constructor(file: ModelFile) {
    if (file.format !== 'kgic-refserver-model') {
      throw new Error('not a refserver model file');
    }
    if (!file.vocab.includes(END_TOKEN)) {
      throw new Error(`model vocabulary must contain ${END_TOKEN}`);
    }
    this.vocab = file.vocab;
    this.relations = file.relations;
    this.smoothing = file.smoothing;
    this.bigrams = file.bigrams;
    this.prototypes = new Map(
      Object.entries(file.relationFeatures).map(([rel, feats]) => [rel, l2Normalize(feats)]),
    );
  }

  /** Exact log-softmax of smoothed continuation counts. */
  nextLogProbs(_prompt: string, prefix: string[]): Record<string, number> {
    const last = prefix.length > 0 ? prefix[prefix.length - 1] : START_CONTEXT;
    const counts = this.bigrams[last] ?? this.bigrams[GLOBAL_CONTEXT] ?? {};
    const lam = this.smoothing;
    let total = lam * this.vocab.length;
    for (const tok of this.vocab) total += counts[tok] ?? 0;
    const out: Record<string, number> = {};
    for (const tok of this.vocab) {
      out[tok] = Math.log(((counts[tok] ?? 0) + lam) / total);
    }
    return out;
  }

  /** Cosine similarity against each relation's prototype, in [0, 1]. */
  propertyScores(text: string): Record<string, number> {
    const features = l2Normalize(charBigramFeatures(text));
    const out: Record<string, number> = {};
    for (const rel of this.relations) {
      const proto = this.prototypes.get(rel) ?? {};
      let dot = 0;
      for (const [gram, weight] of Object.entries(features)) {
        const p = proto[gram];
        if (p !== undefined) dot += weight * p;
      }
      out[rel] = Math.min(1, Math.max(0, dot));
    }
    return out;
  }
}

/** Fit the two heads from labeled triples and optional entity metadata. */
export function fitModel(
  triples: Array<[string, string, string]>,
  metadata: Map<string, { types: string[]; description: string }>,
  smoothing = 0.1,
): ModelFile {
  const chars = new Set<string>();
  const names = new Set<string>();
  const relations: string[] = [];
  const relationSeen = new Set<string>();
  for (const [head, rel, tail] of triples) {
    names.add(head);
    names.add(tail);
    if (!relationSeen.has(rel)) {
      relationSeen.add(rel);
      relations.push(rel);
    }
  }
  for (const name of names) for (const ch of name) chars.add(ch);
  const vocab = [...[...chars].sort(), END_TOKEN];

  const bigrams: Record<string, Record<string, number>> = {};
  const bump = (ctx: string, tok: string) => {
    const row = (bigrams[ctx] ??= {});
    row[tok] = (row[tok] ?? 0) + 1;
  };
  for (const name of names) {
    const tokens = [...name, END_TOKEN];
    let ctx = START_CONTEXT;
    for (const tok of tokens) {
      bump(ctx, tok);
      bump(GLOBAL_CONTEXT, tok);
      ctx = tok;
    }
  }

  const relationFeatures: Record<string, Record<string, number>> = {};
  for (const [head, rel, _tail] of triples) {
    const meta = metadata.get(head);
    const text = [head, ...(meta?.types ?? []), meta?.description ?? '']
      .filter((part) => part.length > 0)
      .join(' ');
    const bucket = (relationFeatures[rel] ??= {});
    for (const [gram, count] of Object.entries(charBigramFeatures(text))) {
      bucket[gram] = (bucket[gram] ?? 0) + count;
    }
  }

  return {
    format: 'kgic-refserver-model',
    version: 1,
    vocab,
    relations,
    smoothing,
    bigrams,
    relationFeatures,
  };
}
