/**
 * Wire protocol: one JSON object per line, UTF-8, canonical form
 * (recursively sorted keys, compact separators).
 *
 *   -> {"op":"hello"}
 *   <- {"ok":true,"vocab":[...],"relations":[...]}
 *   -> {"op":"next_log_probs","prompt":"<text>","prefix":["t1","t2"]}
 *   <- {"ok":true,"log_probs":{"<token>":-0.69,...}}
 *   -> {"op":"property_scores","text":"<rendered entity text>"}
 *   <- {"ok":true,"scores":{"<relation>":0.83,...}}
 *   -> {"op":"shutdown"}
 *   <- {"ok":true}
 *
 * Errors: {"ok":false,"error":"<code>","message":"<text>"} with codes
 * bad_request | model_error | unsupported.
 */

export type ErrorCode = 'bad_request' | 'model_error' | 'unsupported';

export interface ErrorReply {
  ok: false;
  error: ErrorCode;
  message: string;
}

export type Reply =
  | { ok: true; vocab: string[]; relations: string[] }
  | { ok: true; log_probs: Record<string, number> }
  | { ok: true; scores: Record<string, number> }
  | { ok: true }
  | ErrorReply;

export type Request =
  | { op: 'hello' }
  | { op: 'next_log_probs'; prompt: string; prefix: string[] }
  | { op: 'property_scores'; text: string }
  | { op: 'shutdown' };

function sortKeysDeep(value: unknown): unknown {
  if (Array.isArray(value)) {
    return value.map(sortKeysDeep);
  }
  if (value !== null && typeof value === 'object') {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as Record<string, unknown>).sort()) {
      out[key] = sortKeysDeep((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}

/** Canonical serialization: sorted keys, no extra whitespace, raw UTF-8. */
export function canonicalStringify(value: unknown): string {
  return JSON.stringify(sortKeysDeep(value));
}

export function errorReply(error: ErrorCode, message: string): ErrorReply {
  return { ok: false, error, message };
}

/** Parse one request line; returns an error reply for anything malformed. */
export function parseRequest(raw: string): Request | ErrorReply {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    return errorReply('bad_request', 'request is not valid JSON');
  }
  if (parsed === null || typeof parsed !== 'object' || Array.isArray(parsed)) {
    return errorReply('bad_request', "request must be an object with an 'op' field");
  }
  const obj = parsed as Record<string, unknown>;
  if (typeof obj.op !== 'string') {
    return errorReply('bad_request', "request must be an object with an 'op' field");
  }
  switch (obj.op) {
    case 'hello':
      return { op: 'hello' };
    case 'shutdown':
      return { op: 'shutdown' };
    case 'next_log_probs': {
      if (
        typeof obj.prompt !== 'string' ||
        !Array.isArray(obj.prefix) ||
        !obj.prefix.every((t) => typeof t === 'string')
      ) {
        return errorReply('bad_request', "next_log_probs needs 'prompt' and 'prefix'");
      }
      return { op: 'next_log_probs', prompt: obj.prompt, prefix: obj.prefix as string[] };
    }
    case 'property_scores': {
      if (typeof obj.text !== 'string') {
        return errorReply('bad_request', "property_scores needs 'text'");
      }
      return { op: 'property_scores', text: obj.text };
    }
    default:
      return errorReply('unsupported', `unknown op '${obj.op}'`);
  }
}
