/**
 * Model backends behind the bridge protocol.
 *
 * The default `toy` backend is a deterministic, dependency-free stand-in
 * that mirrors the simulator's patch tokenizer and supplies proxy
 * perceptual metrics, so the full protocol is exercisable on any machine.
 * A `pretrained` backend (TA-TiTok tokenizer + masked-generation restorer +
 * learned perceptual metrics) is the documented extension point: selecting
 * it without model weights present refuses to start rather than serving
 * wrong answers.
 *
 * Restoration contract enforced here for every backend: positions that
 * arrive unmasked leave unchanged.
 */

import * as fs from "node:fs";

import { decodePng, encodePng, pooledFeatures, RgbImage } from "./images.js";
import { CODEBOOK_SIZE, MASK, TOKEN_COUNT } from "./protocol.js";

export const CLIP_TEXT_TOKEN_LIMIT = 77;
export const DEFAULT_RESTORE_STEPS = 16;

export interface Backend {
  readonly name: string;
  tokenize(png: Buffer): number[];
  detokenize(tokens: number[], text?: string): Buffer;
  restore(tokens: number[], text?: string): number[];
  lpips(a: Buffer, b: Buffer): number;
  clipSimilarity(a: Buffer, b: Buffer): number;
}

const IMAGE_SIZE = 256;
const GRID_ROWS = 16;
const GRID_COLS = 8;
const PATCH_H = IMAGE_SIZE / GRID_ROWS;
const PATCH_W = IMAGE_SIZE / GRID_COLS;
const BINS = [32, 16, 16]; // 5/4/4 bits for R/G/B
const BIN_WIDTH = BINS.map((b) => 256 / b);

/** Truncate free text to the encoder's token budget (whitespace tokens here). */
export function truncateText(text: string, limit = CLIP_TEXT_TOKEN_LIMIT): string {
  const words = text.split(/\s+/).filter((w) => w.length > 0);
  return words.slice(0, limit).join(" ");
}

function patchMeans(img: RgbImage): Float64Array {
  if (img.width !== IMAGE_SIZE || img.height !== IMAGE_SIZE) {
    throw new Error(`expected a ${IMAGE_SIZE}x${IMAGE_SIZE} image, got ${img.width}x${img.height}`);
  }
  const means = new Float64Array(TOKEN_COUNT * 3);
  for (let row = 0; row < GRID_ROWS; row++) {
    for (let col = 0; col < GRID_COLS; col++) {
      const patch = row * GRID_COLS + col;
      let r = 0;
      let g = 0;
      let b = 0;
      for (let y = row * PATCH_H; y < (row + 1) * PATCH_H; y++) {
        for (let x = col * PATCH_W; x < (col + 1) * PATCH_W; x++) {
          const p = (y * IMAGE_SIZE + x) * 3;
          r += img.data[p];
          g += img.data[p + 1];
          b += img.data[p + 2];
        }
      }
      const n = PATCH_H * PATCH_W;
      means[patch * 3] = r / n;
      means[patch * 3 + 1] = g / n;
      means[patch * 3 + 2] = b / n;
    }
  }
  return means;
}

export class ToyBackend implements Backend {
  readonly name = "toy";
  readonly restoreSteps: number;

  constructor(restoreSteps = DEFAULT_RESTORE_STEPS) {
    this.restoreSteps = restoreSteps;
  }

  tokenize(png: Buffer): number[] {
    const means = patchMeans(decodePng(png));
    const tokens: number[] = [];
    for (let patch = 0; patch < TOKEN_COUNT; patch++) {
      let token = 0;
      for (let c = 0; c < 3; c++) {
        const bin = Math.min(BINS[c] - 1, Math.floor((means[patch * 3 + c] * BINS[c]) / 256));
        token = token * BINS[c] + bin;
      }
      tokens.push(token);
    }
    return tokens;
  }

  detokenize(tokens: number[], _text?: string): Buffer {
    const data = new Uint8Array(IMAGE_SIZE * IMAGE_SIZE * 3);
    for (let patch = 0; patch < TOKEN_COUNT; patch++) {
      const token = tokens[patch];
      const bins = [
        Math.floor(token / (BINS[1] * BINS[2])),
        Math.floor(token / BINS[2]) % BINS[1],
        token % BINS[2],
      ];
      const color = bins.map((bin, c) => Math.floor((bin + 0.5) * BIN_WIDTH[c]));
      const row = Math.floor(patch / GRID_COLS);
      const col = patch % GRID_COLS;
      for (let y = row * PATCH_H; y < (row + 1) * PATCH_H; y++) {
        for (let x = col * PATCH_W; x < (col + 1) * PATCH_W; x++) {
          const p = (y * IMAGE_SIZE + x) * 3;
          data[p] = color[0];
          data[p + 1] = color[1];
          data[p + 2] = color[2];
        }
      }
    }
    return encodePng({ width: IMAGE_SIZE, height: IMAGE_SIZE, data });
  }

  /**
   * Iterative confidence-style fill: on every step the masked positions
   * nearest to surviving context adopt the closest context token, so holes
   * close from their edges inward over up to `restoreSteps` rounds.  The
   * text prompt only biases the all-masked fallback (deterministically).
   */
  restore(tokens: number[], text?: string): number[] {
    const out = tokens.slice();
    const prompt = truncateText(text ?? "");
    for (let step = 0; step < this.restoreSteps; step++) {
      const holes = out
        .map((t, i) => ({ t, i }))
        .filter(({ t }) => t === MASK)
        .map(({ i }) => i);
      if (holes.length === 0) break;
      const filled = out.map((t, i) => ({ t, i })).filter(({ t }) => t !== MASK);
      if (filled.length === 0) {
        // nothing to condition on: fall back to a prompt-derived constant
        let seed = 0;
        for (const ch of prompt) seed = (seed * 31 + ch.charCodeAt(0)) % CODEBOOK_SIZE;
        out.fill(seed);
        break;
      }
      const byConfidence = holes
        .map((i) => {
          let best = Number.MAX_SAFE_INTEGER;
          let value = 0;
          for (const f of filled) {
            const d = Math.abs(f.i - i);
            if (d < best || (d === best && f.i < i)) {
              best = d;
              value = f.t;
            }
          }
          return { i, distance: best, value };
        })
        .sort((a, b) => a.distance - b.distance || a.i - b.i);
      const closest = byConfidence[0].distance;
      for (const h of byConfidence) {
        if (h.distance === closest || step === this.restoreSteps - 1) out[h.i] = h.value;
      }
    }
    return out;
  }

  /** Perceptual distance proxy: mean squared pooled-feature error in [0, 1]. */
  lpips(a: Buffer, b: Buffer): number {
    const fa = pooledFeatures(decodePng(a), 32);
    const fb = pooledFeatures(decodePng(b), 32);
    let sum = 0;
    for (let i = 0; i < fa.length; i++) {
      const d = (fa[i] - fb[i]) / 255;
      sum += d * d;
    }
    return sum / fa.length;
  }

  /** Semantic similarity proxy: cosine of pooled feature vectors. */
  clipSimilarity(a: Buffer, b: Buffer): number {
    const fa = pooledFeatures(decodePng(a), 16);
    const fb = pooledFeatures(decodePng(b), 16);
    let dot = 0;
    let na = 0;
    let nb = 0;
    for (let i = 0; i < fa.length; i++) {
      dot += fa[i] * fb[i];
      na += fa[i] * fa[i];
      nb += fb[i] * fb[i];
    }
    if (na === 0 || nb === 0) return na === nb ? 1.0 : 0.0;
    return dot / Math.sqrt(na * nb);
  }
}

export interface BackendOptions {
  kind: "toy" | "pretrained";
  modelPath?: string;
  restoreSteps?: number;
}

export function loadBackend(opts: BackendOptions): Backend {
  if (opts.kind === "toy") {
    return new ToyBackend(opts.restoreSteps ?? DEFAULT_RESTORE_STEPS);
  }
  // Pretrained weights are a deployment-time artifact; refuse to start
  // without them instead of silently degrading.
  if (!opts.modelPath || !fs.existsSync(opts.modelPath)) {
    throw new Error(
      `pretrained backend needs --model-path pointing at local weights ` +
        `(got ${opts.modelPath ?? "nothing"}); refusing to start`,
    );
  }
  throw new Error(
    "no pretrained runtime is bundled with this build; implement Backend " +
      "against your checkpoint format and register it here",
  );
}
