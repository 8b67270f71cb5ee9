import { execFileSync } from "node:child_process";
import { mkdtempSync, readdirSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { unifiedDiff } from "../src/diff.js";
import { generateVersionPair, writeVersionPair } from "../src/generate.js";

describe("unifiedDiff", () => {
  it("is empty for identical inputs", () => {
    expect(unifiedDiff("a\nb\n", "a\nb\n", "x.js")).toBe("");
  });

  it("emits standard headers and hunks", () => {
    const diff = unifiedDiff("a\nb\nc\n", "a\nB\nc\n", "x.js");
    expect(diff).toContain("--- a/x.js");
    expect(diff).toContain("+++ b/x.js");
    expect(diff).toContain("@@ -1,3 +1,3 @@");
    expect(diff).toContain("-b");
    expect(diff).toContain("+B");
  });

  it("splits distant edits into separate hunks", () => {
    const a = Array.from({ length: 30 }, (_, i) => `line${i}`).join("\n") + "\n";
    const b = a.replace("line2", "LINE2").replace("line27", "LINE27");
    const diff = unifiedDiff(a, b, "x.js");
    expect(diff.match(/^@@ /gm)).toHaveLength(2);
  });
});

describe("generateVersionPair", () => {
  it("produces identical trees at severity 0 with no noise", () => {
    const pair = generateVersionPair(0, 0);
    expect(pair.changeSet.changes).toHaveLength(0);
    for (const [path, text] of pair.treeA) {
      expect(pair.treeB.get(path)).toBe(text);
    }
  });

  it("produces exactly 3 relevant entries at any positive severity", () => {
    for (const severity of [1, 2, 5, 10, 50, 100]) {
      const pair = generateVersionPair(severity, 0);
      const relevant = pair.changeSet.changes.filter((c) => c.relevant);
      expect(relevant.map((c) => c.id).sort()).toEqual(["s1", "s2", "s3"]);
      for (const change of relevant) {
        expect(change.ideal_span).not.toBeNull();
        expect(change.diff).toContain(`--- a/${change.path}`);
      }
    }
  });

  it("adds the requested number of neutral changes", () => {
    const pair = generateVersionPair(10, 5);
    const neutral = pair.changeSet.changes.filter((c) => !c.relevant);
    expect(neutral).toHaveLength(5);
    for (const change of neutral) {
      expect(change.ideal_span).toBeNull();
      expect(change.diff.length).toBeGreaterThan(0);
    }
  });

  it("spreads each regression across at least two call sites", () => {
    const pair = generateVersionPair(20, 0);
    for (const change of pair.changeSet.changes) {
      const added = change.diff
        .split("\n")
        .filter((l) => l.startsWith("+") && !l.startsWith("+++"));
      expect(added.length).toBeGreaterThanOrEqual(2);
    }
    // S2 inserts its shuffle at two distinct call sites
    const region = pair.treeB.get("src/region.js")!;
    expect(region.match(/shuffleClone\(rng, /g)!.length).toBeGreaterThanOrEqual(3);
  });

  it("writes trees whose files all parse as JavaScript", () => {
    const out = mkdtempSync(join(tmpdir(), "pair-"));
    writeVersionPair(generateVersionPair(50, 3), out);
    for (const tree of ["tree_A", "tree_B"]) {
      for (const file of readdirSync(join(out, tree, "src"))) {
        execFileSync("node", ["--check", join(out, tree, "src", file)]);
      }
    }
    const changeSet = JSON.parse(readFileSync(join(out, "changes.json"), "utf8"));
    expect(changeSet.base).toBe("vA");
    expect(changeSet.changes.length).toBe(6);
  });

  it("marks ideal spans that contain the injected work", () => {
    const pair = generateVersionPair(10, 0);
    for (const change of pair.changeSet.changes) {
      const lines = pair.treeB.get(change.path)!.split("\n");
      const { start, end } = change.ideal_span!;
      const block = lines.slice(start - 1, end).join("\n");
      expect(block.length).toBeGreaterThan(0);
      expect(start).toBeLessThanOrEqual(end);
      expect(end).toBeLessThanOrEqual(lines.length);
      if (change.id === "s2") expect(block).toContain("rng.shuffle");
      if (change.id === "s3") expect(block).toContain("updateStep");
    }
  });
});
