#!/usr/bin/env node
/** render_figs <study.json> --out <dir>: study outputs to SVG figures. */

import { FIGURE_KINDS, loadStudy, renderAll } from "./figures";

function usage(): never {
  console.error("usage: render_figs <study.json> --out <dir>");
  process.exit(2);
}

export function main(argv: string[]): number {
  const args = argv.slice(2);
  let manifestPath: string | null = null;
  let outDir: string | null = null;
  for (let i = 0; i < args.length; i++) {
    if (args[i] === "--out") {
      outDir = args[++i] ?? null;
    } else if (!manifestPath) {
      manifestPath = args[i];
    } else {
      usage();
    }
  }
  if (!manifestPath || !outDir) usage();
  const study = loadStudy(manifestPath);
  const written = renderAll(study, outDir);
  for (const kind of FIGURE_KINDS) {
    console.log(`wrote ${written[kind]}`);
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv));
}
