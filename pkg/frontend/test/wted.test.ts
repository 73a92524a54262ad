import * as zlib from "node:zlib";
import { describe, expect, it } from "vitest";

import { WtedDataset, writeWted } from "../src/wted.js";

function tinyDataset(): WtedDataset {
  return {
    n: 2,
    c: 1,
    h: 2,
    w: 2,
    nClasses: 3,
    pixels: Uint8Array.from([1, 2, 3, 4, 5, 6, 7, 8]),
    labels: Uint8Array.from([0, 2]),
  };
}

describe("writeWted", () => {
  it("lays out magic, version, header fields and checksum", () => {
    const buf = writeWted(tinyDataset());
    expect(buf.subarray(0, 4).toString("ascii")).toBe("WTED");
    expect(buf.readUInt16LE(4)).toBe(1);
    expect(buf.readUInt32LE(6)).toBe(2); // sample count
    expect(buf.readUInt16LE(10)).toBe(1); // channels
    expect(buf.readUInt16LE(12)).toBe(2); // height
    expect(buf.readUInt16LE(14)).toBe(2); // width
    expect(buf.readUInt16LE(16)).toBe(3); // classes

    const body = buf.subarray(6, buf.length - 4);
    expect(buf.readUInt32LE(buf.length - 4)).toBe(zlib.crc32(body) >>> 0);
    expect(buf.length).toBe(6 + 12 + 8 + 2 + 4);
  });

  it("rejects pixel buffers of the wrong size", () => {
    const ds = tinyDataset();
    ds.pixels = Uint8Array.from([1, 2, 3]);
    expect(() => writeWted(ds)).toThrow(/pixel/);
  });

  it("rejects labels outside the class range", () => {
    const ds = tinyDataset();
    ds.labels = Uint8Array.from([0, 3]);
    expect(() => writeWted(ds)).toThrow(/label/);
  });
});
