import difflib

import pytest
from hypothesis import given, settings, strategies as st

from duetbench.changeset import (
    ChangeSet,
    FileChange,
    GroundTruthChange,
    Hunk,
    fingerprint,
    parse_json_changes,
    parse_unified_diff,
    render_git_like,
)
from duetbench.errors import MalformedDiff, SchemaError


def ref_diff(a_lines, b_lines, path="rank.src"):
    """Reference diff text from difflib, our independent generator."""
    out = difflib.unified_diff(
        a_lines, b_lines, fromfile=f"a/{path}", tofile=f"b/{path}", lineterm=""
    )
    text = "\n".join(out)
    return text + "\n" if text else ""


class TestParseUnifiedDiff:
    def test_empty_input(self):
        cs = parse_unified_diff("")
        assert cs.file_changes == ()

    def test_single_added_line_matches_reference_generator(self):
        a = ["line one", "line two"]
        b = ["line one", "added here", "line two"]
        cs = parse_unified_diff(ref_diff(a, b))
        assert len(cs.file_changes) == 1
        fc = cs.file_changes[0]
        assert fc.path == "rank.src"
        assert len(fc.hunks) == 1
        hunk = fc.hunks[0]
        assert hunk.old_start == 1
        assert hunk.old_count == 2
        assert hunk.new_start == 1
        assert hunk.new_count == 3
        assert hunk.lines == (
            ("context", "line one"),
            ("add", "added here"),
            ("context", "line two"),
        )

    def test_count_mismatch_raises(self):
        text = (
            "--- a/x.src\n"
            "+++ b/x.src\n"
            "@@ -1,3 +1,3 @@\n"
            " only\n"
            " two old lines\n"
        )
        with pytest.raises(MalformedDiff):
            parse_unified_diff(text)

    def test_binary_rejected(self):
        with pytest.raises(MalformedDiff):
            parse_unified_diff("Binary files a/x and b/x differ\n")

    def test_rename_rejected(self):
        with pytest.raises(MalformedDiff):
            parse_unified_diff("rename from old.src\nrename to new.src\n")

    def test_count_one_shorthand(self):
        text = "--- a/x\n+++ b/x\n@@ -1 +1 @@\n-old\n+new\n"
        cs = parse_unified_diff(text)
        hunk = cs.file_changes[0].hunks[0]
        assert (hunk.old_count, hunk.new_count) == (1, 1)

    def test_paths_sorted_lexicographically(self):
        text = ref_diff(["a"], ["b"], path="zzz.src") + ref_diff(["a"], ["b"], path="aaa.src")
        cs = parse_unified_diff(text)
        assert [fc.path for fc in cs.file_changes] == ["aaa.src", "zzz.src"]


class TestFingerprint:
    def _fc(self, text="x"):
        return FileChange("f.src", (Hunk(1, 1, 1, 1, (("del", "a"), ("add", text))),))

    def test_deterministic(self):
        assert fingerprint(self._fc()) == fingerprint(self._fc())

    def test_one_char_difference(self):
        assert fingerprint(self._fc("x")) != fingerprint(self._fc("y"))

    def test_path_matters(self):
        fc = self._fc()
        renamed = FileChange("g.src", fc.hunks)
        assert fc.fingerprint != renamed.fingerprint

    def test_shape(self):
        assert len(self._fc().fingerprint) == 64
        int(self._fc().fingerprint, 16)


class TestRenderRoundTrip:
    def test_empty(self):
        assert render_git_like(ChangeSet("A", "B", ())) == ""

    def test_single_hunk_one_header(self):
        cs = parse_unified_diff(ref_diff(["a", "b"], ["a", "c"]))
        headers = [l for l in render_git_like(cs).splitlines() if l.startswith("@@")]
        assert len(headers) == 1

    def test_fixture_corpus_round_trip(self, fixture_diffs):
        assert len(fixture_diffs) >= 10
        for text in fixture_diffs:
            cs = parse_unified_diff(text)
            again = parse_unified_diff(render_git_like(cs))
            assert again == cs
            assert [fc.fingerprint for fc in again.file_changes] == [
                fc.fingerprint for fc in cs.file_changes
            ]


file_lines = st.lists(
    st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), max_size=20),
    max_size=30,
)


@settings(max_examples=100, deadline=None)
@given(a=file_lines, b=file_lines)
def test_random_diff_parse_and_round_trip(a, b):
    text = ref_diff(a, b)
    cs = parse_unified_diff(text)
    for fc in cs.file_changes:
        for hunk in fc.hunks:
            hunk.validate()
    assert parse_unified_diff(render_git_like(cs)) == cs


class TestParseJsonChanges:
    def _doc(self, **overrides):
        change = {
            "id": "c1",
            "path": "rank.src",
            "diff": ref_diff(["a", "b"], ["a", "x", "b"]),
            "relevant": True,
            "ideal_span": {"start": 14, "end": 22},
            "note": "loop bound change",
        }
        change.update(overrides)
        return {"base": "v1", "target": "v2", "changes": [change]}

    def test_relevant_with_span(self):
        cs, gt = parse_json_changes(self._doc())
        assert gt == [
            GroundTruthChange("rank.src", "c1", True, (14, 22), "loop bound change")
        ]
        assert cs.file_changes[0].path == "rank.src"

    def test_neutral_comment_change_accepted(self):
        doc = self._doc(relevant=False, ideal_span=None, note="comment only")
        _, gt = parse_json_changes(doc)
        assert gt[0].relevant is False
        assert gt[0].ideal_span is None

    def test_relevant_without_span_rejected(self):
        with pytest.raises(SchemaError):
            parse_json_changes(self._doc(ideal_span=None))

    def test_missing_key_rejected(self):
        doc = self._doc()
        del doc["changes"][0]["path"]
        with pytest.raises(SchemaError):
            parse_json_changes(doc)
