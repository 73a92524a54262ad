/**
 * SVHN cropped-digits conversion.
 *
 * The .mat files store X as uint8 with dims 32x32x3xN (height, width,
 * channel, sample; column-major) and y as N labels in 1..10 where **10
 * means the digit zero** -- the classic SVHN pitfall. The converter remaps
 * label 10 to class 0 and reorders pixels to sample-channel-row-column,
 * copying the bytes otherwise unmodified.
 */

import { MatArray, MatFormatError, MX_UINT8, readMat } from "./mat5.js";
import { WtedDataset } from "./wted.js";

export class SvhnShapeError extends Error {}

const SIDE = 32;
const CHANNELS = 3;

function labelCount(y: MatArray): number {
  // y arrives as Nx1 (sometimes 1xN); anything else is not a label vector
  const dims = y.dims.filter((d) => d !== 1);
  if (dims.length > 1) {
    throw new SvhnShapeError(`y has dims [${y.dims.join("x")}], expected a vector`);
  }
  return dims.length === 0 ? 1 : dims[0];
}

export function convertSvhn(mat: Buffer): WtedDataset {
  let arrays: Map<string, MatArray>;
  try {
    arrays = readMat(mat);
  } catch (e) {
    if (e instanceof MatFormatError) throw e;
    throw new MatFormatError(`unreadable MAT file: ${(e as Error).message}`);
  }
  const x = arrays.get("X");
  const y = arrays.get("y");
  if (!x || !y) {
    throw new SvhnShapeError(
      `expected arrays "X" and "y", found: ${[...arrays.keys()].join(", ") || "none"}`);
  }
  if (x.dims.length !== 4 || x.dims[0] !== SIDE || x.dims[1] !== SIDE
      || x.dims[2] !== CHANNELS) {
    throw new SvhnShapeError(
      `X has dims [${x.dims.join("x")}], expected [32x32x3xN]`);
  }
  if (x.klass !== MX_UINT8 || !(x.data instanceof Uint8Array)) {
    throw new SvhnShapeError("X is not a uint8 array");
  }
  const n = x.dims[3];
  if (labelCount(y) !== n) {
    throw new SvhnShapeError(`y holds ${labelCount(y)} labels for ${n} images`);
  }

  const labels = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    const v = Number(y.data[i]);
    if (!Number.isInteger(v) || v < 1 || v > 10) {
      throw new SvhnShapeError(`label ${v} at index ${i}: SVHN labels are 1..10`);
    }
    labels[i] = v % 10; // 10 is the digit zero
  }

  // column-major [h, w, c, n] -> row-major [n, c, h, w]
  const src = x.data;
  const pixels = new Uint8Array(n * CHANNELS * SIDE * SIDE);
  let dst = 0;
  for (let s = 0; s < n; s++) {
    for (let c = 0; c < CHANNELS; c++) {
      const planeBase = SIDE * SIDE * (c + CHANNELS * s);
      for (let h = 0; h < SIDE; h++) {
        for (let w = 0; w < SIDE; w++) {
          pixels[dst++] = src[h + SIDE * w + planeBase];
        }
      }
    }
  }
  return { n, c: CHANNELS, h: SIDE, w: SIDE, nClasses: 10, pixels, labels };
}
