/**
 * Version-pair fixture generator.
 *
 * Emits tree_A (baseline) and tree_B (baseline plus three
 * severity-parameterized latency regressions spread across multiple
 * call sites, plus `noiseCount` neutral comment/log changes), together
 * with an annotated JSON change set carrying ground-truth ideal spans.
 * At severity 0 the relevant files are byte-identical between trees.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join, dirname } from "node:path";
import { unifiedDiff } from "./diff.js";

export interface ChangeEntry {
  id: string;
  path: string;
  diff: string;
  relevant: boolean;
  ideal_span: { start: number; end: number } | null;
  note: string;
}

export interface VersionPair {
  treeA: Map<string, string>;
  treeB: Map<string, string>;
  changeSet: {
    base: string;
    target: string;
    changes: ChangeEntry[];
  };
}

function formatFactor(value: number): string {
  return Number(value.toFixed(2)).toString();
}

/** S1 — candidate-limit inflation in the hybrid search (two call sites). */
function renderSearch(severityPct: number): string {
  const factor = formatFactor(4 * (1 + severityPct / 100));
  return [
    '"use strict";',
    'const { bm25Scores, knnScores, fuse } = require("./ranklib");',
    "",
    "function hybridSearch(catalog, query, limit) {",
    `  const candidateLimit = Math.round(limit * ${factor});`,
    "  const bm25 = bm25Scores(query, catalog.movies, candidateLimit);",
    `  const knn = knnScores(query, catalog.movies, Math.round(limit * ${factor}));`,
    "  return fuse(limit, bm25, knn);",
    "}",
    "",
    "module.exports = { hybridSearch };",
    "",
  ].join("\n");
}

/** S2 — shuffle work added to the region random walk (two call sites). */
function renderRegion(severityPct: number): string {
  const lines = [
    '"use strict";',
    'const { Rng } = require("./rnglib");',
    "",
  ];
  if (severityPct > 0) {
    const passes = Math.max(1, Math.round(severityPct / 5));
    lines.push(
      `const SHUFFLE_PASSES = ${passes};`,
      "",
      "function shuffleClone(rng, list) {",
      "  const clone = list.slice();",
      "  for (let p = 0; p < SHUFFLE_PASSES; p++) {",
      "    rng.shuffle(clone);",
      "  }",
      "  return clone;",
      "}",
      ""
    );
  }
  lines.push(
    "function walkRegion(graph, seed, steps) {",
    "  const rng = new Rng(seed);",
    "  const nodes = graph.nodes;",
    "  const visits = new Map();"
  );
  if (severityPct > 0) {
    lines.push("  shuffleClone(rng, nodes);");
  }
  lines.push(
    "  let current = nodes[rng.int(nodes.length)];",
    "  for (let s = 0; s < steps; s++) {",
    "    visits.set(current, (visits.get(current) || 0) + 1);",
    "    current = stepOnce(graph, current, rng);",
    "  }",
    "  return visits;",
    "}",
    "",
    "function stepOnce(graph, current, rng) {",
    "  const out = graph.edges.get(current) || [];",
    "  if (out.length === 0 || rng.next() > 0.85) {"
  );
  if (severityPct > 0) {
    lines.push("    shuffleClone(rng, graph.nodes);");
  }
  lines.push(
    "    return graph.nodes[rng.int(graph.nodes.length)];",
    "  }",
    "  return out[rng.int(out.length)].to;",
    "}",
    "",
    "module.exports = { walkRegion };",
    ""
  );
  return lines.join("\n");
}

/** S3 — more factorization iterations than necessary (two call sites). */
function renderRecommend(severityPct: number): string {
  const iterations = 40 + Math.ceil((40 * severityPct) / 100);
  return [
    '"use strict";',
    'const { updateStep } = require("./nmflib");',
    "",
    `const FACTOR_ITERATIONS = ${iterations};`,
    "",
    "function factorize(r, w, h) {",
    "  for (let iter = 0; iter < FACTOR_ITERATIONS; iter++) {",
    "    ({ w, h } = updateStep(r, w, h));",
    "  }",
    "  return { w, h };",
    "}",
    "",
    "function refine(r, w, h) {",
    `  for (let iter = 0; iter < ${iterations}; iter++) {`,
    "    ({ w, h } = updateStep(r, w, h));",
    "  }",
    "  return { w, h };",
    "}",
    "",
    "module.exports = { factorize, refine };",
    "",
  ].join("\n");
}

function renderNoiseBase(index: number): string {
  return [
    '"use strict";',
    "",
    `function helper${index}(x) {`,
    `  return x + ${index + 1};`,
    "}",
    "",
    `module.exports = { helper${index} };`,
    "",
  ].join("\n");
}

function renderNoiseTarget(index: number): string {
  const base = renderNoiseBase(index);
  if (index % 2 === 0) {
    return base.replace(
      `function helper${index}`,
      `// shifts the input by a fixed offset\nfunction helper${index}`
    );
  }
  return base.replace(
    "  return x +",
    `  console.debug("helper${index} input", x);\n  return x +`
  );
}

/** 1-based inclusive line range of the block containing `marker`. */
function findSpan(
  text: string,
  marker: string,
  extraLines = 0
): { start: number; end: number } {
  const lines = text.split("\n");
  const index = lines.findIndex((l) => l.includes(marker));
  if (index < 0) throw new Error(`marker not found: ${marker}`);
  return { start: index + 1, end: index + 1 + extraLines };
}

export function generateVersionPair(
  severityPct: number,
  noiseCount: number
): VersionPair {
  const treeA = new Map<string, string>();
  const treeB = new Map<string, string>();
  const changes: ChangeEntry[] = [];

  const relevantFiles: {
    id: string;
    path: string;
    render: (s: number) => string;
    span: (target: string) => { start: number; end: number };
    note: string;
  }[] = [
    {
      id: "s1",
      path: "src/search.js",
      render: renderSearch,
      span: (t) => {
        const first = findSpan(t, "const candidateLimit");
        const second = findSpan(t, "const knn =");
        return { start: first.start, end: second.end };
      },
      note: "candidate limit inflated in both retrieval stages",
    },
    {
      id: "s2",
      path: "src/region.js",
      render: renderRegion,
      span: (t) => findSpan(t, "function shuffleClone", 6),
      note: "random shuffle of a cloned node list during the walk",
    },
    {
      id: "s3",
      path: "src/recommend.js",
      render: renderRecommend,
      span: (t) => {
        // the refine loop carries the literal iteration-count change
        const fn = findSpan(t, "function refine(");
        return { start: fn.start + 1, end: fn.start + 3 };
      },
      note: "more factorization iterations than necessary",
    },
  ];

  for (const file of relevantFiles) {
    const base = file.render(0);
    const target = file.render(severityPct);
    treeA.set(file.path, base);
    treeB.set(file.path, target);
    const diff = unifiedDiff(base, target, file.path);
    if (diff) {
      changes.push({
        id: file.id,
        path: file.path,
        diff,
        relevant: true,
        ideal_span: file.span(target),
        note: file.note,
      });
    }
  }

  for (let i = 0; i < noiseCount; i++) {
    const path = `src/noise${i}.js`;
    const base = renderNoiseBase(i);
    const target = renderNoiseTarget(i);
    treeA.set(path, base);
    treeB.set(path, target);
    changes.push({
      id: `n${i}`,
      path,
      diff: unifiedDiff(base, target, path),
      relevant: false,
      ideal_span: null,
      note: i % 2 === 0 ? "comment only" : "debug log only",
    });
  }

  return {
    treeA,
    treeB,
    changeSet: { base: "vA", target: "vB", changes },
  };
}

export function writeVersionPair(pair: VersionPair, outDir: string): void {
  for (const [tree, name] of [
    [pair.treeA, "tree_A"],
    [pair.treeB, "tree_B"],
  ] as const) {
    for (const [path, text] of tree) {
      const dest = join(outDir, name, path);
      mkdirSync(dirname(dest), { recursive: true });
      writeFileSync(dest, text);
    }
  }
  writeFileSync(
    join(outDir, "changes.json"),
    JSON.stringify(pair.changeSet, null, 2) + "\n"
  );
}
