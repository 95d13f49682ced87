/**
 * Protocol server: answers bridge requests over TCP or stdio.
 *
 * Requests are handled strictly in arrival order per connection; multiple
 * connections are accepted up to a bound, beyond which newcomers get a
 * `busy` error frame and are closed.  Every response echoes the request's
 * correlation id; malformed requests produce `{err: code}` frames instead
 * of dropped connections.
 */

import * as net from "node:net";
import type { Duplex } from "node:stream";

import { Backend, truncateText } from "./backend.js";
import {
  BridgeRequest,
  BridgeResponse,
  encodeFrame,
  FrameReader,
  MASK,
  PROTOCOL_VERSION,
  validTokenList,
} from "./protocol.js";

export const MAX_CONNECTIONS = 32;

export function handleRequest(backend: Backend, raw: unknown): BridgeResponse {
  const req = raw as Partial<BridgeRequest>;
  const id = typeof req.id === "number" ? req.id : -1;
  const fail = (code: string): BridgeResponse => ({ v: PROTOCOL_VERSION, id, err: code });

  if (req.v !== PROTOCOL_VERSION) return fail("bad_version");
  try {
    switch (req.op) {
      case "restore": {
        if (!validTokenList(req.tokens)) return fail("bad_tokens");
        const text = req.text === undefined ? undefined : truncateText(req.text);
        const restored = backend.restore(req.tokens, text);
        // hard server-side contract: unmasked positions pass through unchanged
        for (let i = 0; i < req.tokens.length; i++) {
          if (req.tokens[i] !== MASK && restored[i] !== req.tokens[i]) {
            return fail("contract_violation");
          }
        }
        if (restored.some((t) => t === MASK)) return fail("unfilled_mask");
        return { v: PROTOCOL_VERSION, id, tokens: restored };
      }
      case "tokenize": {
        if (typeof req.image !== "string") return fail("bad_image");
        const tokens = backend.tokenize(Buffer.from(req.image, "base64"));
        return { v: PROTOCOL_VERSION, id, tokens };
      }
      case "detokenize": {
        if (!validTokenList(req.tokens) || req.tokens.includes(MASK)) return fail("bad_tokens");
        const png = backend.detokenize(req.tokens, req.text);
        return { v: PROTOCOL_VERSION, id, image: png.toString("base64") };
      }
      case "lpips":
      case "clip_similarity": {
        if (typeof req.image !== "string" || typeof req.image_ref !== "string") {
          return fail("bad_image");
        }
        const a = Buffer.from(req.image, "base64");
        const b = Buffer.from(req.image_ref, "base64");
        const value =
          req.op === "lpips" ? backend.lpips(a, b) : backend.clipSimilarity(a, b);
        return { v: PROTOCOL_VERSION, id, value };
      }
      default:
        return fail("bad_op");
    }
  } catch (exc) {
    return fail(`backend_error: ${(exc as Error).message}`);
  }
}

export function attachStream(backend: Backend, stream: Duplex): void {
  const reader = new FrameReader();
  stream.on("data", (chunk: Buffer) => {
    let messages: unknown[];
    try {
      messages = reader.push(chunk);
    } catch {
      stream.write(encodeFrame({ v: PROTOCOL_VERSION, id: -1, err: "bad_frame" }));
      stream.end();
      return;
    }
    for (const message of messages) {
      stream.write(encodeFrame(handleRequest(backend, message)));
    }
  });
}

export function serveTcp(backend: Backend, port: number, host = "127.0.0.1"): net.Server {
  let active = 0;
  const server = net.createServer((socket) => {
    if (active >= MAX_CONNECTIONS) {
      socket.write(encodeFrame({ v: PROTOCOL_VERSION, id: -1, err: "busy" }));
      socket.end();
      return;
    }
    active += 1;
    socket.on("close", () => {
      active -= 1;
    });
    socket.on("error", () => socket.destroy());
    attachStream(backend, socket);
  });
  server.listen(port, host);
  return server;
}

export function serveStdio(backend: Backend): void {
  const reader = new FrameReader();
  process.stdin.on("data", (chunk: Buffer) => {
    for (const message of reader.push(chunk)) {
      process.stdout.write(encodeFrame(handleRequest(backend, message)));
    }
  });
}
