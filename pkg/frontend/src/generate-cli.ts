/**
 * CLI wrapper: `node dist/generate-cli.js <severityPct> <noiseCount> <outDir>`
 */

import { generateVersionPair, writeVersionPair } from "./generate.js";

const [severityArg, noiseArg, outDir] = process.argv.slice(2);
if (!outDir) {
  console.error("usage: generate-cli <severityPct> <noiseCount> <outDir>");
  process.exit(2);
}
const severity = Number.parseInt(severityArg, 10);
const noise = Number.parseInt(noiseArg, 10);
if (!Number.isFinite(severity) || !Number.isFinite(noise)) {
  console.error("severityPct and noiseCount must be integers");
  process.exit(2);
}
writeVersionPair(generateVersionPair(severity, noise), outDir);
console.log(`wrote version pair (severity ${severity}, noise ${noise}) to ${outDir}`);
