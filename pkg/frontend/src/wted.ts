/**
 * Writer for the WTED dataset container consumed by the training library.
 *
 * Layout (little-endian):
 *   "WTED" | u16 version=1 | u32 N | u16 C | u16 H | u16 W | u16 n_classes
 *   | N*C*H*W pixel bytes | N label bytes | u32 CRC32
 * The CRC covers everything after the 6-byte magic+version prefix.
 */

import * as zlib from "node:zlib";

export interface WtedDataset {
  n: number;
  c: number;
  h: number;
  w: number;
  nClasses: number;
  /** N*C*H*W bytes, sample-major then channel, row, column */
  pixels: Uint8Array;
  /** N bytes, class ids < nClasses */
  labels: Uint8Array;
}

export function writeWted(ds: WtedDataset): Buffer {
  const { n, c, h, w, nClasses } = ds;
  if (ds.pixels.length !== n * c * h * w) {
    throw new Error(`pixel buffer holds ${ds.pixels.length} bytes, expected ${n * c * h * w}`);
  }
  if (ds.labels.length !== n) {
    throw new Error(`label buffer holds ${ds.labels.length} entries, expected ${n}`);
  }
  if (nClasses > 255 || Math.max(c, h, w) >= 1 << 16) {
    throw new Error("dataset too large for the container format");
  }
  for (const v of ds.labels) {
    if (v >= nClasses) {
      throw new Error(`label ${v} outside the declared ${nClasses} classes`);
    }
  }
  const head = Buffer.alloc(12);
  head.writeUInt32LE(n, 0);
  head.writeUInt16LE(c, 4);
  head.writeUInt16LE(h, 6);
  head.writeUInt16LE(w, 8);
  head.writeUInt16LE(nClasses, 10);
  const body = Buffer.concat([head, Buffer.from(ds.pixels), Buffer.from(ds.labels)]);
  const prefix = Buffer.alloc(6);
  prefix.write("WTED", 0, "ascii");
  prefix.writeUInt16LE(1, 4);
  const crc = Buffer.alloc(4);
  crc.writeUInt32LE(zlib.crc32(body) >>> 0, 0);
  return Buffer.concat([prefix, body, crc]);
}
