/**
 * Wire protocol shared with the link simulator (version 1).
 *
 * Messages are length-prefixed JSON over a stream: a 4-byte big-endian
 * unsigned payload length followed by that many bytes of UTF-8 JSON.
 * Every message carries `v: 1` and a correlation `id` that the response
 * echoes. In token lists, -1 is the MASK sentinel.
 */

export const PROTOCOL_VERSION = 1;
export const MASK = -1;
export const TOKEN_COUNT = 128;
export const CODEBOOK_SIZE = 8192;

export interface BridgeRequest {
  v: number;
  id: number;
  op: "tokenize" | "detokenize" | "restore" | "lpips" | "clip_similarity";
  tokens?: number[];
  image?: string; // base64 PNG
  image_ref?: string; // base64 PNG (second operand for the metric ops)
  text?: string;
}

export interface BridgeResponse {
  v: number;
  id: number;
  tokens?: number[];
  image?: string;
  value?: number;
  err?: string;
}

export function encodeFrame(payload: object): Buffer {
  const body = Buffer.from(JSON.stringify(payload), "utf8");
  const frame = Buffer.allocUnsafe(4 + body.length);
  frame.writeUInt32BE(body.length, 0);
  body.copy(frame, 4);
  return frame;
}

/** Incremental frame splitter for a byte stream. */
export class FrameReader {
  private pending: Buffer = Buffer.alloc(0);

  /** Feed raw bytes; returns every complete JSON message now available. */
  push(chunk: Buffer): unknown[] {
    this.pending = this.pending.length ? Buffer.concat([this.pending, chunk]) : chunk;
    const messages: unknown[] = [];
    while (this.pending.length >= 4) {
      const length = this.pending.readUInt32BE(0);
      if (this.pending.length < 4 + length) break;
      const body = this.pending.subarray(4, 4 + length);
      this.pending = this.pending.subarray(4 + length);
      messages.push(JSON.parse(body.toString("utf8")));
    }
    return messages;
  }
}

export function validTokenList(tokens: unknown): tokens is number[] {
  return (
    Array.isArray(tokens) &&
    tokens.length === TOKEN_COUNT &&
    tokens.every(
      (t) => Number.isInteger(t) && t >= MASK && t < CODEBOOK_SIZE,
    )
  );
}
