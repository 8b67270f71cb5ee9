import subprocess

import pytest

from duetbench.changeset import parse_unified_diff
from duetbench.errors import RangeOutOfBounds, SentinelCorrupted
from duetbench.instrumenter import (
    APPLIED,
    JAVASCRIPT_ADAPTER,
    PYTHON_ADAPTER,
    SKIPPED_SYNTAX,
    SKIPPED_UNMAPPABLE,
    LanguageAdapter,
    apply_plan_symmetric,
    insert_span,
    map_new_to_old,
    map_to_old_coordinates,
    strip_instrumentation,
    strip_text,
)
from duetbench.planner import MarkerPlan, MarkerSpan, SensitivityLevel, heuristic_plan
from tests.conftest import make_diff

BASE_JS = """\
function rank(items) {
  let total = 0;
  for (let i = 0; i < 20; i++) {
    total += items[i % items.length];
  }
  return total;
}
module.exports = { rank };
"""

TARGET_JS = BASE_JS.replace("i < 20", "i < 50")


def file_change(base, target, path="rank.js"):
    return parse_unified_diff(
        make_diff(base.splitlines(), target.splitlines(), path)
    ).file_changes[0]


class TestCoordinateMapping:
    def test_zero_offset_before_any_hunk(self):
        fc = file_change(
            "\n".join(f"l{i}" for i in range(1, 40)) + "\n",
            "\n".join(f"l{i}" for i in range(1, 40)) + "\nextra\n",
        )
        span = MarkerSpan("s", fc.path, (10, 20))
        assert map_to_old_coordinates(span, fc) == (10, 20)

    def test_offset_through_earlier_addition(self):
        base = [f"l{i}" for i in range(1, 30)]
        target = base[:3] + ["x1", "x2", "x3"] + base[3:]
        fc = file_change("\n".join(base) + "\n", "\n".join(target) + "\n")
        span = MarkerSpan("s", fc.path, (10, 20))
        assert map_to_old_coordinates(span, fc) == (7, 17)

    def test_span_inside_pure_addition_unmappable(self):
        base = [f"l{i}" for i in range(1, 10)]
        target = base[:5] + ["new1", "new2"] + base[5:]
        fc = file_change("\n".join(base) + "\n", "\n".join(target) + "\n")
        span = MarkerSpan("s", fc.path, (6, 7))
        assert map_to_old_coordinates(span, fc) is None

    def test_explicit_old_range_passes_through(self):
        span = MarkerSpan("s", "x.js", (5, 9), old_range=(4, 8))
        assert map_to_old_coordinates(span, None) == (4, 8)

    def test_context_lines_map_one_to_one(self):
        base = ["a", "b", "c", "d"]
        target = ["a", "B", "c", "d"]
        fc = file_change("\n".join(base) + "\n", "\n".join(target) + "\n")
        assert map_new_to_old(fc, 1) == 1
        assert map_new_to_old(fc, 2) is None  # replaced line
        assert map_new_to_old(fc, 3) == 3
        assert map_new_to_old(fc, 4) == 4


class TestInsertSpan:
    def test_plain_insertion_exact_text(self):
        text = "l1\nl2\nl3\nl4\nl5\n"
        out = insert_span(text, "s1", (2, 4), JAVASCRIPT_ADAPTER)
        assert out == (
            "l1\n"
            'globalThis.__duet_begin?.("s1", {}); // duet-span:s1\n'
            "l2\nl3\nl4\n"
            'globalThis.__duet_end?.("s1"); // duet-span:s1\n'
            "l5\n"
        )

    def test_out_of_bounds(self):
        with pytest.raises(RangeOutOfBounds):
            insert_span("a\nb\nc\n", "s1", (0, 3), JAVASCRIPT_ADAPTER)
        with pytest.raises(RangeOutOfBounds):
            insert_span("a\nb\nc\n", "s1", (2, 9), JAVASCRIPT_ADAPTER)

    def test_exit_wrap_preserves_return_value_js(self, tmp_path):
        src = (
            "function f(x) {\n"
            "  let y = x * 2;\n"
            "  return y + 1;\n"
            "}\n"
            "console.log(f(20));\n"
        )
        instrumented = insert_span(src, "s1", (2, 3), JAVASCRIPT_ADAPTER)
        assert "try {" in instrumented and "finally" in instrumented
        plain, wrapped = tmp_path / "plain.js", tmp_path / "wrapped.js"
        plain.write_text(src)
        wrapped.write_text(instrumented)
        out1 = subprocess.run(["node", str(plain)], capture_output=True, text=True)
        out2 = subprocess.run(["node", str(wrapped)], capture_output=True, text=True)
        assert out2.returncode == 0
        assert out1.stdout == out2.stdout == "41\n"

    def test_exit_wrap_preserves_return_value_python(self, tmp_path):
        src = (
            "def f(x):\n"
            "    y = x * 2\n"
            "    return y + 1\n"
            "\n"
            "print(f(20))\n"
        )
        # the python adapter does not wrap exit points; hooks are plain
        # begin/end lines at body indentation
        instrumented = insert_span(src, "s1", (2, 3), PYTHON_ADAPTER)
        assert "try" not in instrumented
        hooks = "def __duet_begin(*a): pass\ndef __duet_end(*a): pass\n"
        plain, wrapped = tmp_path / "plain.py", tmp_path / "wrapped.py"
        plain.write_text(src)
        wrapped.write_text(hooks + instrumented)
        out1 = subprocess.run(["python3", str(plain)], capture_output=True, text=True)
        out2 = subprocess.run(["python3", str(wrapped)], capture_output=True, text=True)
        assert out2.returncode == 0, out2.stderr
        assert out1.stdout == out2.stdout == "41\n"

    def test_original_lines_byte_preserved(self):
        text = "a\n  weird   spacing\t\nend\n"
        out = insert_span(text, "s1", (1, 3), JAVASCRIPT_ADAPTER)
        kept = [l for l in out.split("\n") if "duet-span:" not in l]
        assert "\n".join(kept) == text


class TestStrip:
    def test_round_trip(self):
        out = insert_span(TARGET_JS, "s1", (3, 5), JAVASCRIPT_ADAPTER)
        assert strip_text(out, JAVASCRIPT_ADAPTER) == TARGET_JS

    def test_identity_without_spans(self):
        assert strip_text(TARGET_JS, JAVASCRIPT_ADAPTER) == TARGET_JS

    def test_corrupted_sentinel(self):
        out = insert_span(TARGET_JS, "s1", (3, 5), JAVASCRIPT_ADAPTER)
        tampered = out.replace("duet-span:s1\n", "duet-span:s1 EDITED\n", 1)
        with pytest.raises(SentinelCorrupted):
            strip_text(tampered, JAVASCRIPT_ADAPTER)


@pytest.fixture
def trees(tmp_path):
    tree_a = tmp_path / "vA"
    tree_b = tmp_path / "vB"
    for root, text in ((tree_a, BASE_JS), (tree_b, TARGET_JS)):
        (root / "src").mkdir(parents=True)
        (root / "src" / "rank.js").write_text(text)
    fc = file_change(BASE_JS, TARGET_JS, "src/rank.js")
    cs = parse_unified_diff(make_diff(BASE_JS.splitlines(), TARGET_JS.splitlines(), "src/rank.js"))
    return tree_a, tree_b, cs, fc


class TestApplySymmetric:
    def test_symmetric_application(self, trees, tmp_path):
        tree_a, tree_b, cs, fc = trees
        plan = heuristic_plan(fc, TARGET_JS, SensitivityLevel.MEDIUM)
        assert len(plan.spans) == 1
        ta, tb, report = apply_plan_symmetric(
            tree_a, tree_b, [plan], JAVASCRIPT_ADAPTER, cs, tmp_path / "out"
        )
        assert {n for n, _ in ta.applied_spans} == {n for n, _ in tb.applied_spans}
        assert report.count(APPLIED) == 1
        a_text = (ta.root_dir / "src/rank.js").read_text()
        b_text = (tb.root_dir / "src/rank.js").read_text()
        for text in (a_text, b_text):
            assert text.count("duet-span:" + plan.spans[0].name) >= 2
        assert (tmp_path / "out" / "metadata.json").exists()

    def test_unmappable_span_in_neither_tree(self, trees, tmp_path):
        tree_a, tree_b, cs, fc = trees
        # a span addressing lines that only exist in B
        base = [f"l{i}" for i in range(1, 10)]
        target = base[:5] + ["function added() {", "  return 1;", "}"] + base[5:]
        (tree_b / "src" / "newstuff.js").write_text("\n".join(target) + "\n")
        (tree_a / "src" / "newstuff.js").write_text("\n".join(base) + "\n")
        fc2 = file_change("\n".join(base) + "\n", "\n".join(target) + "\n", "src/newstuff.js")
        cs2 = parse_unified_diff(
            make_diff(base, target, "src/newstuff.js")
        )
        plan = MarkerPlan(
            fc2.fingerprint,
            (MarkerSpan("added.fn", "src/newstuff.js", (6, 8)),),
            "test",
            SensitivityLevel.MEDIUM,
        )
        ta, tb, report = apply_plan_symmetric(
            tree_a, tree_b, [plan], JAVASCRIPT_ADAPTER, cs2, tmp_path / "out"
        )
        assert report.statuses["added.fn"] == SKIPPED_UNMAPPABLE
        assert "duet-span:" not in (ta.root_dir / "src/newstuff.js").read_text()
        assert "duet-span:" not in (tb.root_dir / "src/newstuff.js").read_text()

    def test_syntax_breaking_adapter_reverts_both(self, trees, tmp_path):
        tree_a, tree_b, cs, fc = trees
        broken = LanguageAdapter(
            id="broken",
            span_begin_template='this is not syntax (((("{name}"',
            span_end_template='also broken "{name}"',
            exit_wrap_open="try {{",
            exit_wrap_close="}} finally {{}}",
            exit_keywords=("return",),
            syntax_check_command=("node", "--check", "{file}"),
            comment_prefix="//",
        )
        plan = heuristic_plan(fc, TARGET_JS, SensitivityLevel.MEDIUM)
        ta, tb, report = apply_plan_symmetric(
            tree_a, tree_b, [plan], broken, cs, tmp_path / "out"
        )
        assert report.count(SKIPPED_SYNTAX) == 1
        assert (ta.root_dir / "src/rank.js").read_text() == BASE_JS
        assert (tb.root_dir / "src/rank.js").read_text() == TARGET_JS
        assert ta.applied_spans == () and tb.applied_spans == ()

    def test_strip_restores_originals(self, trees, tmp_path):
        tree_a, tree_b, cs, fc = trees
        plan = heuristic_plan(fc, TARGET_JS, SensitivityLevel.MEDIUM)
        ta, tb, _ = apply_plan_symmetric(
            tree_a, tree_b, [plan], JAVASCRIPT_ADAPTER, cs, tmp_path / "out"
        )
        stripped_a = strip_instrumentation(ta.root_dir, JAVASCRIPT_ADAPTER, tmp_path / "sA")
        stripped_b = strip_instrumentation(tb.root_dir, JAVASCRIPT_ADAPTER, tmp_path / "sB")
        assert (stripped_a / "src/rank.js").read_text() == BASE_JS
        assert (stripped_b / "src/rank.js").read_text() == TARGET_JS

    def test_instrumented_files_pass_syntax_check(self, trees, tmp_path):
        tree_a, tree_b, cs, fc = trees
        plan = heuristic_plan(fc, TARGET_JS, SensitivityLevel.HIGH)
        ta, tb, report = apply_plan_symmetric(
            tree_a, tree_b, [plan], JAVASCRIPT_ADAPTER, cs, tmp_path / "out"
        )
        assert report.count(APPLIED) >= 1
        for root in (ta.root_dir, tb.root_dir):
            proc = subprocess.run(
                ["node", "--check", str(root / "src/rank.js")], capture_output=True
            )
            assert proc.returncode == 0
