import difflib

import pytest


def make_diff(a_lines, b_lines, path):
    out = difflib.unified_diff(
        a_lines, b_lines, fromfile=f"a/{path}", tofile=f"b/{path}", lineterm=""
    )
    text = "\n".join(out)
    return text + "\n" if text else ""


def apply_change(base_lines, fc):
    """Apply a FileChange's hunks to base-version lines, yielding the target."""
    out = []
    cursor = 1  # next unconsumed base line (1-based)
    for hunk in fc.hunks:
        out.extend(base_lines[cursor - 1 : hunk.old_start - 1])
        cursor = hunk.old_start
        for tag, text in hunk.lines:
            if tag == "context":
                out.append(base_lines[cursor - 1])
                cursor += 1
            elif tag == "del":
                cursor += 1
            else:
                out.append(text)
    out.extend(base_lines[cursor - 1 :])
    return out


BASE_FILE = [
    "function rank(items) {",
    "  let total = 0;",
    "  for (let i = 0; i < items.length; i++) {",
    "    total += score(items[i]);",
    "  }",
    "  return total;",
    "}",
    "",
    "function score(item) {",
    "  return item.weight * 2;",
    "}",
]


@pytest.fixture(scope="session")
def fixture_diffs():
    """A small corpus of realistic unified diffs over synthetic sources."""
    diffs = []
    variants = [
        BASE_FILE[:2] + ["  // warm cache first"] + BASE_FILE[2:],
        [l.replace("* 2", "* 3") for l in BASE_FILE],
        BASE_FILE[:5] + BASE_FILE[6:],                       # delete a line
        BASE_FILE + ["", "function extra() {", "  return 1;", "}"],
        ["// preamble"] + BASE_FILE,
        [l.replace("i++", "i += 1") for l in BASE_FILE],
        BASE_FILE[:9] + ["function score(item) {", "  const w = item.weight;", "  return w * 2;", "}"],
        [],                                                  # file emptied
        [l.upper() if "total" in l else l for l in BASE_FILE],
        BASE_FILE[:3] + ["    if (!items[i]) continue;"] + BASE_FILE[3:],
        [l.replace("items.length", "Math.min(items.length, 50)") for l in BASE_FILE],
    ]
    for idx, variant in enumerate(variants):
        diffs.append(make_diff(BASE_FILE, variant, f"src/mod{idx}.js"))
    diffs.append(make_diff([], BASE_FILE, "src/newfile.js"))
    return [d for d in diffs if d]
