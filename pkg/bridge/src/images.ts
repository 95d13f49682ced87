/** PNG <-> raw RGB helpers for the metric and tokenizer ops. */

import { PNG } from "pngjs";

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB triples, 8 bits per channel. */
  data: Uint8Array;
}

export function decodePng(pngBytes: Buffer): RgbImage {
  const png = PNG.sync.read(pngBytes);
  const rgb = new Uint8Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    rgb[i * 3] = png.data[i * 4];
    rgb[i * 3 + 1] = png.data[i * 4 + 1];
    rgb[i * 3 + 2] = png.data[i * 4 + 2];
  }
  return { width: png.width, height: png.height, data: rgb };
}

export function encodePng(img: RgbImage): Buffer {
  const png = new PNG({ width: img.width, height: img.height });
  for (let i = 0; i < img.width * img.height; i++) {
    png.data[i * 4] = img.data[i * 3];
    png.data[i * 4 + 1] = img.data[i * 3 + 1];
    png.data[i * 4 + 2] = img.data[i * 3 + 2];
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png);
}

/** Mean-pool an RGB image onto a cells x cells grid, per channel. */
export function pooledFeatures(img: RgbImage, cells: number): Float64Array {
  const out = new Float64Array(cells * cells * 3);
  const counts = new Float64Array(cells * cells);
  for (let y = 0; y < img.height; y++) {
    const cy = Math.min(cells - 1, Math.floor((y * cells) / img.height));
    for (let x = 0; x < img.width; x++) {
      const cx = Math.min(cells - 1, Math.floor((x * cells) / img.width));
      const cell = cy * cells + cx;
      const p = (y * img.width + x) * 3;
      out[cell * 3] += img.data[p];
      out[cell * 3 + 1] += img.data[p + 1];
      out[cell * 3 + 2] += img.data[p + 2];
      counts[cell] += 1;
    }
  }
  for (let cell = 0; cell < cells * cells; cell++) {
    const n = counts[cell] || 1;
    out[cell * 3] /= n;
    out[cell * 3 + 1] /= n;
    out[cell * 3 + 2] /= n;
  }
  return out;
}
