#!/usr/bin/env node
/** Command line entry: dataset conversion and metrics plotting. */

import * as fs from "node:fs";
import * as path from "node:path";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { MatFormatError } from "./mat5.js";
import { SchemaError } from "./metrics.js";
import { plotMetrics, RunInput } from "./plot.js";
import { convertSvhn, SvhnShapeError } from "./svhn.js";
import { writeWted } from "./wted.js";

function fail(message: string): never {
  process.stderr.write(`error: ${message}\n`);
  process.exit(1);
}

function runConvert(format: string, input: string, output: string): void {
  if (format !== "svhn") {
    fail(`unknown source format "${format}" (supported: svhn)`);
  }
  const parent = path.dirname(path.resolve(output));
  if (!fs.existsSync(parent)) {
    fail(`destination directory does not exist: ${parent}`);
  }
  let mat: Buffer;
  try {
    mat = fs.readFileSync(input);
  } catch (e) {
    fail(`cannot read ${input}: ${(e as Error).message}`);
  }
  try {
    const ds = convertSvhn(mat);
    fs.writeFileSync(output, writeWted(ds));
    process.stdout.write(
      `${output}: ${ds.n} samples, ${ds.c}x${ds.h}x${ds.w}, ${ds.nClasses} classes `
      + `(label 10 remapped to class 0)\n`);
  } catch (e) {
    if (e instanceof MatFormatError || e instanceof SvhnShapeError) {
      fail(`${input}: ${e.message}`);
    }
    throw e;
  }
}

function runPlot(csvPaths: string[], outDir: string): void {
  const inputs: RunInput[] = csvPaths.map((p) => {
    try {
      return { path: p, text: fs.readFileSync(p, "utf8") };
    } catch (e) {
      fail(`cannot read ${p}: ${(e as Error).message}`);
    }
  });
  try {
    const figures = plotMetrics(inputs);
    fs.mkdirSync(outDir, { recursive: true });
    for (const [name, svg] of figures) {
      const dest = path.join(outDir, name);
      fs.writeFileSync(dest, svg);
      process.stdout.write(`${dest}\n`);
    }
  } catch (e) {
    if (e instanceof SchemaError) fail(e.message);
    throw e;
  }
}

yargs(hideBin(process.argv))
  .scriptName("selftarget-convert")
  .command(
    "convert <format> <input> <output>",
    "convert a dataset into the WTED container",
    (y) => y
      .positional("format", { type: "string", describe: "source format (svhn)" })
      .positional("input", { type: "string", describe: "source .mat file" })
      .positional("output", { type: "string", describe: "destination .wted file" }),
    (argv) => runConvert(argv.format as string, argv.input as string,
                         argv.output as string),
  )
  .command(
    "plot <csv..>",
    "render metrics CSVs to SVG figures",
    (y) => y
      .positional("csv", { type: "string", array: true, describe: "metrics CSV files" })
      .option("out", { type: "string", demandOption: true, describe: "output directory" }),
    (argv) => runPlot(argv.csv as string[], argv.out as string),
  )
  .demandCommand(1, "specify a command: convert or plot")
  .strict()
  .fail((msg, err) => {
    if (err && !(err instanceof MatFormatError) && !(err instanceof SchemaError)
        && !(err instanceof SvhnShapeError)) {
      throw err;
    }
    fail(msg ?? (err as Error).message);
  })
  .parse();
