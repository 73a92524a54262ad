/**
 * Minimal MAT-file (level 5) reader: little-endian files, real numeric
 * arrays, zlib-compressed elements. That covers the SVHN cropped-digit
 * files (X: uint8 HxWxCxN, y: labels) and nothing more exotic.
 */

import * as zlib from "node:zlib";

export class MatFormatError extends Error {}

// element data types
const MI_INT8 = 1;
const MI_UINT8 = 2;
const MI_INT16 = 3;
const MI_UINT16 = 4;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_INT64 = 12;
const MI_UINT64 = 13;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;

// array classes (the numeric subset)
export const MX_DOUBLE = 6;
export const MX_SINGLE = 7;
export const MX_INT8 = 8;
export const MX_UINT8 = 9;
export const MX_INT16 = 10;
export const MX_UINT16 = 11;
export const MX_INT32 = 12;
export const MX_UINT32 = 13;

const NUMERIC_CLASSES = new Set([
  MX_DOUBLE, MX_SINGLE, MX_INT8, MX_UINT8,
  MX_INT16, MX_UINT16, MX_INT32, MX_UINT32,
]);

export interface MatArray {
  name: string;
  klass: number;
  dims: number[];
  /** column-major values; Uint8Array for mxUINT8, Float64Array otherwise */
  data: Uint8Array | Float64Array;
}

interface Element {
  type: number;
  data: Buffer;
}

function readElement(buf: Buffer, offset: number): { el: Element; next: number } {
  if (offset + 8 > buf.length) {
    throw new MatFormatError(`truncated element tag at byte ${offset}`);
  }
  const word = buf.readUInt32LE(offset);
  const small = word >>> 16;
  if (small !== 0) {
    // small data element: type and length packed into one tag word
    const type = word & 0xffff;
    const len = small;
    if (len > 4) {
      throw new MatFormatError(`small element with length ${len} at byte ${offset}`);
    }
    return {
      el: { type, data: buf.subarray(offset + 4, offset + 4 + len) },
      next: offset + 8,
    };
  }
  const type = word;
  const len = buf.readUInt32LE(offset + 4);
  if (offset + 8 + len > buf.length) {
    throw new MatFormatError(`element of ${len} bytes overruns the file at byte ${offset}`);
  }
  const data = buf.subarray(offset + 8, offset + 8 + len);
  // data sections pad to the next 8-byte boundary (compressed ones do not)
  const pad = type === MI_COMPRESSED ? 0 : (8 - (len % 8)) % 8;
  return { el: { type, data }, next: offset + 8 + len + pad };
}

function numericToF64(type: number, data: Buffer): Float64Array {
  const read = (size: number, get: (o: number) => number) => {
    const out = new Float64Array(Math.floor(data.length / size));
    for (let i = 0; i < out.length; i++) out[i] = get(i * size);
    return out;
  };
  switch (type) {
    case MI_INT8: return read(1, (o) => data.readInt8(o));
    case MI_UINT8: return read(1, (o) => data.readUInt8(o));
    case MI_INT16: return read(2, (o) => data.readInt16LE(o));
    case MI_UINT16: return read(2, (o) => data.readUInt16LE(o));
    case MI_INT32: return read(4, (o) => data.readInt32LE(o));
    case MI_UINT32: return read(4, (o) => data.readUInt32LE(o));
    case MI_SINGLE: return read(4, (o) => data.readFloatLE(o));
    case MI_DOUBLE: return read(8, (o) => data.readDoubleLE(o));
    case MI_INT64: return read(8, (o) => Number(data.readBigInt64LE(o)));
    case MI_UINT64: return read(8, (o) => Number(data.readBigUInt64LE(o)));
    default:
      throw new MatFormatError(`unsupported numeric element type ${type}`);
  }
}

function parseMatrix(data: Buffer): MatArray {
  let off = 0;
  const flags = readElement(data, off);
  if (flags.el.type !== MI_UINT32 || flags.el.data.length < 8) {
    throw new MatFormatError("matrix does not start with an array-flags element");
  }
  const flagWord = flags.el.data.readUInt32LE(0);
  const klass = flagWord & 0xff;
  const complex = (flagWord & 0x0800) !== 0;
  off = flags.next;

  const dimsEl = readElement(data, off);
  if (dimsEl.el.type !== MI_INT32) {
    throw new MatFormatError("matrix is missing its dimensions element");
  }
  const dims: number[] = [];
  for (let i = 0; i < dimsEl.el.data.length; i += 4) {
    dims.push(dimsEl.el.data.readInt32LE(i));
  }
  off = dimsEl.next;

  const nameEl = readElement(data, off);
  if (nameEl.el.type !== MI_INT8) {
    throw new MatFormatError("matrix is missing its name element");
  }
  const name = nameEl.el.data.toString("ascii");
  off = nameEl.next;

  if (!NUMERIC_CLASSES.has(klass)) {
    throw new MatFormatError(`array "${name}": unsupported class ${klass} (numeric arrays only)`);
  }
  if (complex) {
    throw new MatFormatError(`array "${name}": complex data is not supported`);
  }

  const real = readElement(data, off);
  const count = dims.reduce((a, b) => a * b, 1);
  let values: Uint8Array | Float64Array;
  if (klass === MX_UINT8 && real.el.type === MI_UINT8) {
    values = new Uint8Array(real.el.data); // keep the exact bytes
  } else {
    values = numericToF64(real.el.type, real.el.data);
  }
  if (values.length !== count) {
    throw new MatFormatError(
      `array "${name}": ${values.length} values for dims [${dims.join("x")}]`);
  }
  return { name, klass, dims, data: values };
}

/** Parse every top-level array in a MAT 5 file into a name -> array map. */
export function readMat(buf: Buffer): Map<string, MatArray> {
  if (buf.length < 128) {
    throw new MatFormatError("file shorter than the 128-byte MAT header");
  }
  const version = buf.readUInt16LE(124);
  const e0 = buf[126];
  const e1 = buf[127];
  if (e0 === 0x4d && e1 === 0x49) {
    throw new MatFormatError("big-endian MAT file; only little-endian files are supported");
  }
  if (e0 !== 0x49 || e1 !== 0x4d) {
    throw new MatFormatError("not a MAT 5 file (bad endian indicator)");
  }
  if (version !== 0x0100) {
    throw new MatFormatError(`unsupported MAT version 0x${version.toString(16)}`);
  }

  const out = new Map<string, MatArray>();
  let off = 128;
  while (off < buf.length) {
    const { el, next } = readElement(buf, off);
    if (el.type === MI_COMPRESSED) {
      let inflated: Buffer;
      try {
        inflated = zlib.inflateSync(el.data);
      } catch (e) {
        throw new MatFormatError(`compressed element at byte ${off} fails to inflate`);
      }
      const inner = readElement(inflated, 0);
      if (inner.el.type !== MI_MATRIX) {
        throw new MatFormatError(`compressed element holds type ${inner.el.type}, expected a matrix`);
      }
      const arr = parseMatrix(inner.el.data);
      out.set(arr.name, arr);
    } else if (el.type === MI_MATRIX) {
      const arr = parseMatrix(el.data);
      out.set(arr.name, arr);
    } else {
      throw new MatFormatError(`unexpected top-level element type ${el.type} at byte ${off}`);
    }
    off = next;
  }
  return out;
}
