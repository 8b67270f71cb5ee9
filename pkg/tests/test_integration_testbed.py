"""Cross-package contract tests against the movie testbed in frontend/.

Skipped when the testbed has not been built (`npm run build` in
frontend/) or node is unavailable.
"""

import json
import shutil
import subprocess
from pathlib import Path

import pytest
from click.testing import CliRunner

from duetbench.cli import main
from duetbench.spanstore import check_nesting, read_spans

FRONTEND = Path(__file__).parent.parent / "frontend"
DIST = FRONTEND / "dist"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not (DIST / "generate-cli.js").exists(),
    reason="frontend build not available",
)


def run_cli(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


@pytest.fixture(scope="module")
def version_pair(tmp_path_factory):
    out = tmp_path_factory.mktemp("pair")
    subprocess.run(
        ["node", str(DIST / "generate-cli.js"), "20", "4", str(out)],
        check=True,
        capture_output=True,
    )
    return out


class TestGeneratedPairThroughPipeline:
    def test_extract_plan_instrument_evaluate(self, version_pair, tmp_path):
        stage = tmp_path / "stage"
        result = run_cli(
            ["extract", "--json", str(version_pair / "changes.json"), "--out", str(stage)]
        )
        assert result.exit_code == 0, result.output
        doc = json.loads((stage / "changeset.json").read_text())
        relevant = [g for g in doc["ground_truth"] if g["relevant"]]
        assert len(relevant) == 3

        plan_out = tmp_path / "plans"
        result = run_cli([
            "plan", "--changeset", str(stage / "changeset.json"),
            "--backend", "heuristic", "--sensitivity", "medium",
            "--source-root", str(version_pair / "tree_B"), "--out", str(plan_out),
        ])
        assert result.exit_code == 0, result.output
        plans = json.loads((plan_out / "plans.json").read_text())["plans"]
        planned_paths = {s["path"] for p in plans for s in p["spans"]}
        assert {"src/search.js", "src/region.js", "src/recommend.js"} <= planned_paths

        inst_out = tmp_path / "inst"
        result = run_cli([
            "instrument", "--tree-a", str(version_pair / "tree_A"),
            "--tree-b", str(version_pair / "tree_B"),
            "--plans", str(plan_out / "plans.json"),
            "--changeset", str(stage / "changeset.json"),
            "--adapter", "javascript", "--out", str(inst_out),
        ])
        assert result.exit_code == 0, result.output
        metadata = json.loads((inst_out / "metadata.json").read_text())
        # S1 and S3 modify existing lines and map to both versions; S2 is
        # newly added code with no base-side mapping, so its span must be
        # skipped in both trees with a recorded reason
        assert len(metadata["applied"]) >= 2
        skipped = {s["name"]: s for s in metadata["skipped"]}
        region_skips = [s for n, s in skipped.items() if n.startswith("region")]
        assert region_skips and all(s["reason"] for s in region_skips)

        eval_out = tmp_path / "eval"
        result = run_cli([
            "evaluate", "--changeset", str(stage / "changeset.json"),
            "--metadata", str(inst_out / "metadata.json"), "-k", "5",
            "--out", str(eval_out),
        ])
        assert result.exit_code == 0, result.output
        report = json.loads((eval_out / "evaluation.json").read_text())
        assert report["recall_at_k"] >= 2 / 3
        assert report["specificity_at_k"] == 1.0


RECORDER_SCRIPT = """
import express from "express";
import { SpanRecorder } from "__RECORDER_URL__";

const recorder = new SpanRecorder({ outPath: process.argv[1], versionTag: "B" });
recorder.install();
const app = express();
app.use(recorder.middleware());
app.get("/work", (_req, res) => {
  globalThis.__duet_begin("outer");
  globalThis.__duet_begin("inner");
  globalThis.__duet_end("inner");
  globalThis.__duet_end("outer");
  res.json({ ok: true });
});
const server = app.listen(0, async () => {
  const port = server.address().port;
  for (let seq = 0; seq < 50; seq++) {
    await fetch(`http://127.0.0.1:${port}/work`, {
      headers: { "X-Duet-Seq": String(seq) },
    });
  }
  recorder.flush();
  server.close();
});
"""


class TestRecorderFormatCompat:
    def test_recorder_output_parses_as_span_records(self, tmp_path):
        span_file = tmp_path / "spans-B.ndjson"
        script = RECORDER_SCRIPT.replace(
            "__RECORDER_URL__", (DIST / "recorder.js").as_uri()
        )
        subprocess.run(
            ["node", "--input-type=module", "-e", script, "--", str(span_file)],
            check=True,
            capture_output=True,
            cwd=FRONTEND,
            timeout=60,
        )
        records, corrupted = read_spans(span_file)
        assert corrupted == 0
        assert len(records) == 100  # 50 requests x 2 spans
        assert {r.name for r in records} == {"outer", "inner"}
        assert {r.request_seq for r in records} == set(range(50))
        assert all(r.version_tag == "B" for r in records)
        assert check_nesting(records) == []
