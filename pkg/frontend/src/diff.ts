/**
 * Minimal unified-diff emitter (LCS-based, 3 context lines) for the
 * generated version pairs. Output uses `a/<path>` / `b/<path>` headers
 * and explicit `start,count` hunk ranges.
 */

interface Edit {
  tag: "context" | "del" | "add";
  text: string;
}

function lcsEdits(a: string[], b: string[]): Edit[] {
  const n = a.length;
  const m = b.length;
  const table: Int32Array[] = Array.from(
    { length: n + 1 },
    () => new Int32Array(m + 1)
  );
  for (let i = n - 1; i >= 0; i--) {
    for (let j = m - 1; j >= 0; j--) {
      table[i][j] =
        a[i] === b[j]
          ? table[i + 1][j + 1] + 1
          : Math.max(table[i + 1][j], table[i][j + 1]);
    }
  }
  const edits: Edit[] = [];
  let i = 0;
  let j = 0;
  while (i < n && j < m) {
    if (a[i] === b[j]) {
      edits.push({ tag: "context", text: a[i] });
      i++;
      j++;
    } else if (table[i + 1][j] >= table[i][j + 1]) {
      edits.push({ tag: "del", text: a[i] });
      i++;
    } else {
      edits.push({ tag: "add", text: b[j] });
      j++;
    }
  }
  while (i < n) edits.push({ tag: "del", text: a[i++] });
  while (j < m) edits.push({ tag: "add", text: b[j++] });
  return edits;
}

export function unifiedDiff(
  aText: string,
  bText: string,
  path: string,
  context = 3
): string {
  const a = aText.split("\n");
  if (a[a.length - 1] === "") a.pop();
  const b = bText.split("\n");
  if (b[b.length - 1] === "") b.pop();
  const edits = lcsEdits(a, b);
  if (!edits.some((e) => e.tag !== "context")) return "";

  // group edits into hunks separated by > 2*context unchanged lines
  interface Hunk {
    edits: Edit[];
    oldStart: number;
    newStart: number;
  }
  const hunks: Hunk[] = [];
  let current: Hunk | null = null;
  let oldLine = 1;
  let newLine = 1;
  let pendingContext: Edit[] = [];

  for (const edit of edits) {
    if (edit.tag === "context") {
      if (current) {
        pendingContext.push(edit);
        if (pendingContext.length > 2 * context) {
          current.edits.push(...pendingContext.slice(0, context));
          hunks.push(current);
          current = null;
          pendingContext = [];
        }
      } else {
        pendingContext.push(edit);
        if (pendingContext.length > context) pendingContext.shift();
      }
      oldLine++;
      newLine++;
    } else {
      if (!current) {
        current = {
          edits: [],
          oldStart: oldLine - pendingContext.length,
          newStart: newLine - pendingContext.length,
        };
        current.edits.push(...pendingContext);
      } else {
        current.edits.push(...pendingContext);
      }
      pendingContext = [];
      current.edits.push(edit);
      if (edit.tag === "del") oldLine++;
      else newLine++;
    }
  }
  if (current) {
    current.edits.push(...pendingContext.slice(0, context));
    hunks.push(current);
  }

  const out = [`--- a/${path}`, `+++ b/${path}`];
  for (const hunk of hunks) {
    const oldCount = hunk.edits.filter((e) => e.tag !== "add").length;
    const newCount = hunk.edits.filter((e) => e.tag !== "del").length;
    out.push(`@@ -${hunk.oldStart},${oldCount} +${hunk.newStart},${newCount} @@`);
    for (const edit of hunk.edits) {
      const prefix = edit.tag === "context" ? " " : edit.tag === "del" ? "-" : "+";
      out.push(prefix + edit.text);
    }
  }
  return out.join("\n") + "\n";
}
