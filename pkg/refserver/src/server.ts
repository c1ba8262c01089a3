/**
 * Reference model server for the kgic wire protocol.
 *
 *   node dist/src/server.js --model model.json [--transport stdio|tcp] [--port N]
 *
 * Serves the deterministic char-level model heads from model.ts; replies
 * are canonical JSON lines. In TCP mode the bound port is announced on
 * stdout as "LISTENING <port>". Requests are handled strictly one at a
 * time; a shutdown request stops the server after its reply.
 */

import * as fs from 'node:fs';
import * as net from 'node:net';
import * as readline from 'node:readline';

import { ModelFile, RefModel } from './model';
import { Reply, canonicalStringify, errorReply, parseRequest } from './protocol';

export class Handler {
  constructor(private readonly model: RefModel) {}

  /** Reply plus whether the server should keep running. */
  handleLine(raw: string): { reply: Reply; keepGoing: boolean } {
    const request = parseRequest(raw);
    if ('ok' in request) {
      return { reply: request, keepGoing: true };
    }
    try {
      switch (request.op) {
        case 'hello':
          return {
            reply: { ok: true, vocab: this.model.vocab, relations: this.model.relations },
            keepGoing: true,
          };
        case 'next_log_probs':
          return {
            reply: { ok: true, log_probs: this.model.nextLogProbs(request.prompt, request.prefix) },
            keepGoing: true,
          };
        case 'property_scores':
          return {
            reply: { ok: true, scores: this.model.propertyScores(request.text) },
            keepGoing: true,
          };
        case 'shutdown':
          return { reply: { ok: true }, keepGoing: false };
      }
    } catch (err) {
      return {
        reply: errorReply('model_error', err instanceof Error ? err.message : String(err)),
        keepGoing: true,
      };
    }
  }
}

function serveStdio(handler: Handler): void {
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on('line', (line) => {
    if (line.trim() === '') return;
    const { reply, keepGoing } = handler.handleLine(line);
    process.stdout.write(canonicalStringify(reply) + '\n');
    if (!keepGoing) {
      rl.close();
      process.exit(0);
    }
  });
}

function serveTcp(handler: Handler, host: string, port: number): void {
  const server = net.createServer((socket) => {
    let buffer = '';
    socket.on('data', (chunk) => {
      buffer += chunk.toString('utf-8');
      let newline = buffer.indexOf('\n');
      while (newline >= 0) {
        const line = buffer.slice(0, newline);
        buffer = buffer.slice(newline + 1);
        if (line.trim() !== '') {
          const { reply, keepGoing } = handler.handleLine(line);
          socket.write(canonicalStringify(reply) + '\n');
          if (!keepGoing) {
            socket.end();
            server.close(() => process.exit(0));
            return;
          }
        }
        newline = buffer.indexOf('\n');
      }
    });
    socket.on('error', () => socket.destroy());
  });
  server.listen(port, host, () => {
    const address = server.address() as net.AddressInfo;
    process.stdout.write(`LISTENING ${address.port}\n`);
  });
}

function getFlag(argv: string[], name: string): string | undefined {
  const idx = argv.indexOf(name);
  return idx >= 0 && idx + 1 < argv.length ? argv[idx + 1] : undefined;
}

export function main(argv: string[]): number {
  const modelPath = getFlag(argv, '--model');
  if (!modelPath) {
    process.stderr.write('usage: server --model model.json [--transport stdio|tcp] [--port N]\n');
    return 2;
  }
  let model: RefModel;
  try {
    model = new RefModel(JSON.parse(fs.readFileSync(modelPath, 'utf-8')) as ModelFile);
  } catch (err) {
    process.stderr.write(`cannot load model: ${err instanceof Error ? err.message : err}\n`);
    return 1;
  }
  const handler = new Handler(model);
  const transport = getFlag(argv, '--transport') ?? 'stdio';
  if (transport === 'tcp') {
    serveTcp(handler, getFlag(argv, '--host') ?? '127.0.0.1', Number(getFlag(argv, '--port') ?? '0'));
  } else if (transport === 'stdio') {
    serveStdio(handler);
  } else {
    process.stderr.write(`unknown transport '${transport}'\n`);
    return 2;
  }
  return 0;
}

if (require.main === module) {
  const code = main(process.argv.slice(2));
  if (code !== 0) process.exitCode = code;
}
