"""Command-line pipeline orchestration.

Each stage reads files produced by the previous one and writes files for
the next, so every subcommand is independently runnable and the whole
pipeline is resumable. Exit codes: 0 success (including per-change
degradations), 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import csv
import json
import re
import sys
from pathlib import Path

import click

from . import analyzer, duetrunner, evalkit, instrumenter, spanstore
from .changeset import (
    changeset_from_doc,
    changeset_to_doc,
    parse_json_changes,
    parse_unified_diff,
)
from .errors import DuetBenchError, SchemaError
from .evalkit import GeneratedSpan, change_region
from .planner import (
    HeuristicBackend,
    InferenceBackend,
    InferenceConfig,
    PlanCache,
    SensitivityLevel,
    plan_changes,
    plan_to_doc,
    validate_plan,
)


def _load_json(path: str | Path, what: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read {what} from {path}: {exc}")


def _write_json(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def _out_dir(ctx, override: str | None) -> Path:
    out = override or ctx.obj.get("out") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cfg_default(ctx, key, fallback=None):
    return ctx.obj.get("config", {}).get(key, fallback)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file with default option values per stage.")
@click.option("--seed", type=int, default=None, help="Global random seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Output root directory.")
@click.pass_context
def main(ctx, config_path, seed, out):
    """Duet-benchmarking pipeline: extract, plan, instrument, bench,
    analyze, evaluate, report."""
    ctx.ensure_object(dict)
    config = {}
    if config_path:
        config = _load_json(config_path, "config")
        if not isinstance(config, dict):
            raise click.UsageError("config file must contain a JSON object")
    ctx.obj["config"] = config
    ctx.obj["seed"] = seed if seed is not None else config.get("seed", 0)
    ctx.obj["out"] = out or config.get("out")


@main.command()
@click.option("--diff", "diff_path", type=click.Path(exists=True, dir_okay=False),
              help="Unified diff input.")
@click.option("--json", "json_path", type=click.Path(exists=True, dir_okay=False),
              help="Annotated JSON change-set input (includes ground truth).")
@click.option("--out", "out_override", type=click.Path(file_okay=False), default=None)
@click.pass_context
def extract(ctx, diff_path, json_path, out_override):
    """Parse a change description into the changeset stage file."""
    if bool(diff_path) == bool(json_path):
        raise click.UsageError("provide exactly one of --diff or --json")
    out = _out_dir(ctx, out_override)
    ground_truth = []
    regions = {}
    try:
        if diff_path:
            cs = parse_unified_diff(Path(diff_path).read_text(encoding="utf-8"))
        else:
            doc = _load_json(json_path, "change set")
            cs, gt = parse_json_changes(doc)
            ground_truth = [
                {
                    "id": g.change_id,
                    "path": g.path,
                    "relevant": g.relevant,
                    "ideal_span": list(g.ideal_span) if g.ideal_span else None,
                    "note": g.note,
                }
                for g in gt
            ]
            # per-change target-side extents, used by `evaluate` to score
            # specificity on neutral changes
            for entry in doc["changes"]:
                sub = parse_unified_diff(entry["diff"])
                regions[entry["id"]] = list(change_region(sub.file_changes[0]))
    except (DuetBenchError, SchemaError) as exc:
        raise click.ClickException(str(exc))
    path = _write_json(
        out / "changeset.json",
        {
            "changeset": changeset_to_doc(cs),
            "ground_truth": ground_truth,
            "regions": regions,
        },
    )
    click.echo(f"wrote {path} ({len(cs.file_changes)} changed files)")


def _load_changeset(path):
    doc = _load_json(path, "changeset stage file")
    try:
        return changeset_from_doc(doc["changeset"]), doc
    except (KeyError, TypeError) as exc:
        raise click.ClickException(f"malformed changeset stage file: {exc}")


@main.command()
@click.option("--changeset", "changeset_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sensitivity", type=click.Choice([s.value for s in SensitivityLevel]),
              default=None)
@click.option("--backend", type=click.Choice(["heuristic", "inference"]), default=None)
@click.option("--source-root", type=click.Path(exists=True, file_okay=False),
              default=None, help="Target-version source tree (for heuristics).")
@click.option("--cache", "cache_dir", type=click.Path(file_okay=False), default=None)
@click.option("--workers", type=int, default=4)
@click.option("--out", "out_override", type=click.Path(file_okay=False), default=None)
@click.pass_context
def plan(ctx, changeset_path, sensitivity, backend, source_root, cache_dir,
         workers, out_override):
    """Produce marker plans for every change (cache-aware)."""
    sensitivity = sensitivity or _cfg_default(ctx, "sensitivity", "medium")
    backend = backend or _cfg_default(ctx, "backend", "heuristic")
    source_root = source_root or _cfg_default(ctx, "source_root")
    cache_dir = cache_dir or _cfg_default(ctx, "cache")
    out = _out_dir(ctx, out_override)
    cs, _ = _load_changeset(changeset_path)
    level = SensitivityLevel(sensitivity)

    resolver = None
    if source_root:
        root = Path(source_root)

        def resolver(rel_path: str) -> str:
            return (root / rel_path).read_text(encoding="utf-8")

    if backend == "heuristic":
        if resolver is None:
            raise click.UsageError("--source-root is required for the heuristic backend")
        backend_obj = HeuristicBackend(resolver)
    else:
        try:
            backend_obj = InferenceBackend(InferenceConfig.from_env(), resolver)
        except DuetBenchError as exc:
            raise click.ClickException(str(exc))

    cache = PlanCache(cache_dir) if cache_dir else None
    plans = plan_changes(cs, level, backend_obj, cache=cache, workers=workers)
    skipped = sum(1 for p in plans if p.skip_reason)
    path = _write_json(
        out / "plans.json",
        {
            "backend": backend,
            "sensitivity": sensitivity,
            "plans": [
                {**plan_to_doc(p), "skip_reason": p.skip_reason} for p in plans
            ],
        },
    )
    click.echo(f"wrote {path} ({len(plans)} plans, {skipped} skipped)")


@main.command()
@click.option("--tree-a", type=click.Path(exists=True, file_okay=False))
@click.option("--tree-b", type=click.Path(exists=True, file_okay=False))
@click.option("--plans", "plans_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--changeset", "changeset_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--adapter", "adapter_id", default=None,
              help="Builtin adapter id or path to an adapter JSON file.")
@click.option("--run-id", default="run")
@click.option("--strip", "strip_tree", type=click.Path(exists=True, file_okay=False),
              default=None, help="Reverse mode: strip instrumentation from this tree.")
@click.option("--out", "out_override", type=click.Path(file_okay=False), default=None)
@click.pass_context
def instrument(ctx, tree_a, tree_b, plans_path, changeset_path, adapter_id,
               run_id, strip_tree, out_override):
    """Insert marker spans symmetrically into both trees (or --strip)."""
    adapter_id = adapter_id or _cfg_default(ctx, "adapter", "javascript")
    out = _out_dir(ctx, out_override)
    try:
        adapter = instrumenter.load_adapter(adapter_id)
    except (OSError, KeyError, ValueError) as exc:
        raise click.ClickException(f"cannot load adapter {adapter_id!r}: {exc}")

    if strip_tree:
        try:
            dest = instrumenter.strip_instrumentation(strip_tree, adapter, out / "stripped")
        except DuetBenchError as exc:
            raise click.ClickException(str(exc))
        click.echo(f"wrote {dest}")
        return

    if not (tree_a and tree_b and plans_path and changeset_path):
        raise click.UsageError(
            "--tree-a, --tree-b, --plans, and --changeset are required "
            "(or use --strip)"
        )
    cs, _ = _load_changeset(changeset_path)
    by_fp = {fc.fingerprint: fc for fc in cs.file_changes}
    plans_doc = _load_json(plans_path, "plans stage file")
    plans = []
    for raw in plans_doc.get("plans", []):
        raw = dict(raw)
        raw.pop("skip_reason", None)
        fc = by_fp.get(raw.get("fingerprint"))
        if fc is None or not raw.get("spans"):
            continue
        try:
            plans.append(validate_plan(raw, fc))
        except DuetBenchError as exc:
            raise click.ClickException(f"invalid plan in {plans_path}: {exc}")

    ta, tb, report = instrumenter.apply_plan_symmetric(
        tree_a, tree_b, plans, adapter, cs, out_dir=out, run_id=run_id
    )
    applied = report.count(instrumenter.APPLIED)
    click.echo(
        f"wrote {out} (applied {applied}, "
        f"skipped {len(report.statuses) - applied}); metadata.json has details"
    )


def _run_config_from_doc(doc: dict) -> duetrunner.RunConfig:
    steps = [
        duetrunner.WorkloadStep(
            method=s.get("method", "GET"),
            path_template=s["path"],
            params=tuple(
                (k, tuple(v)) for k, v in sorted(s.get("params", {}).items())
            ),
            weight=float(s.get("weight", 1.0)),
            endpoint_id=s.get("id", ""),
        )
        for s in doc.get("workload", [])
    ]
    return duetrunner.RunConfig(
        cmd_a=list(doc["cmd_a"]),
        cmd_b=list(doc["cmd_b"]),
        base_url_a=doc["base_url_a"],
        base_url_b=doc["base_url_b"],
        env_a=dict(doc.get("env_a", {})),
        env_b=dict(doc.get("env_b", {})),
        cpu_set_a=tuple(doc.get("cpu_set_a", ())),
        cpu_set_b=tuple(doc.get("cpu_set_b", ())),
        reserved_os_core=doc.get("reserved_os_core"),
        warmup_requests=int(doc.get("warmup_requests", 10)),
        measured_requests=int(doc.get("measured_requests", 100)),
        workload=steps,
        health_path=doc.get("health_path", "/healthz"),
        timeout_ms=int(doc.get("timeout_ms", 5000)),
        health_deadline_s=float(doc.get("health_deadline_s", 30.0)),
        seed=int(doc.get("seed", 0)),
    )


@main.command()
@click.option("--run-config", "run_config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON run description: commands, URLs, CPU sets, workload.")
@click.option("--aa", is_flag=True,
              help="Mark this run as an A/A (overhead) experiment.")
@click.option("--out", "out_override", type=click.Path(file_okay=False), default=None)
@click.pass_context
def bench(ctx, run_config_path, aa, out_override):
    """Run the synchronized duet benchmark and collect artifacts."""
    out = _out_dir(ctx, out_override)
    doc = _load_json(run_config_path, "run config")
    try:
        cfg = _run_config_from_doc(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise click.ClickException(f"malformed run config: {exc}")
    if ctx.obj.get("seed") is not None and "seed" not in doc:
        cfg.seed = ctx.obj["seed"]

    try:
        handles = duetrunner.launch_duet(cfg)
    except DuetBenchError as exc:
        raise click.ClickException(str(exc))
    try:
        result = duetrunner.run_workload(handles)
    finally:
        handles.terminate()
    artifact = duetrunner.collect_artifacts(
        handles,
        result,
        out,
        span_file_a=doc.get("span_file_a"),
        span_file_b=doc.get("span_file_b"),
    )
    meta_path = artifact.directory / "run_metadata.json"
    meta = json.loads(meta_path.read_text())
    meta["aa_mode"] = aa
    _write_json(meta_path, meta)
    click.echo(
        f"wrote {artifact.directory} "
        f"({len(result.pairs)} pairs, {result.dropped} dropped)"
    )
    if not result.completed:
        raise click.ClickException("a SUT exited mid-run; artifacts are partial")


def _read_pairs_csv(path):
    by_endpoint: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_endpoint.setdefault(row["endpoint"], []).append(
                (float(row["x_a_ns"]), float(row["x_b_ns"]))
            )
    return by_endpoint


@main.command()
@click.option("--pairs", "pairs_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="client_pairs.csv from the bench stage.")
@click.option("--spans-a", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--spans-b", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--resamples", type=int, default=analyzer.DEFAULT_RESAMPLES)
@click.option("--level", type=float, default=analyzer.DEFAULT_LEVEL)
@click.option("--out", "out_override", type=click.Path(file_okay=False), default=None)
@click.pass_context
def analyze(ctx, pairs_path, spans_a, spans_b, resamples, level, out_override):
    """Statistical analysis: per-endpoint and per-span detection results."""
    out = _out_dir(ctx, out_override)
    seed = ctx.obj.get("seed", 0)
    doc = {"endpoints": {}, "spans": {}, "distributions": {}, "seed": seed}

    try:
        for endpoint, pairs in sorted(_read_pairs_csv(pairs_path).items()):
            series = analyzer.relative_changes(pairs, source=endpoint)
            result = analyzer.bootstrap_ci_median(
                series, resamples=resamples, level=level, seed=seed
            )
            doc["endpoints"][endpoint] = result.to_doc()
            xa = [a for a, _ in pairs]
            xb = [b for _, b in pairs]
            comparison = analyzer.compare_distributions(xa, xb)
            doc["distributions"][endpoint] = {
                "hellinger": comparison.hellinger,
                "bins": comparison.bins,
                "qq": [list(p) for p in comparison.qq_points],
            }

        if spans_a and spans_b:
            records_a, bad_a = spanstore.read_spans(spans_a)
            records_b, bad_b = spanstore.read_spans(spans_b)
            doc["corrupted_span_lines"] = {"A": bad_a, "B": bad_b}
            names = sorted({r.name for r in records_a} & {r.name for r in records_b})
            for name in names:
                paired = spanstore.pair_spans(records_a, records_b, name)
                if len(paired.pairs) < 2:
                    continue
                series = analyzer.relative_changes(
                    [(a, b) for _, a, b in paired.pairs], source=name
                )
                result = analyzer.bootstrap_ci_median(
                    series, resamples=resamples, level=level, seed=seed
                )
                doc["spans"][name] = {
                    **result.to_doc(),
                    "dropped_a": paired.dropped_a,
                    "dropped_b": paired.dropped_b,
                }

        verdicts = [d["verdict"] for d in doc["endpoints"].values()] + [
            d["verdict"] for d in doc["spans"].values()
        ]
        doc["aggregate_verdict"] = (
            analyzer.aggregate_verdicts(verdicts) if verdicts else None
        )
    except DuetBenchError as exc:
        raise click.ClickException(str(exc))

    path = _write_json(out / "analysis.json", doc)
    click.echo(f"wrote {path} (aggregate: {doc['aggregate_verdict']})")


@main.command()
@click.option("--changeset", "changeset_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Changeset stage file with ground truth (from `extract --json`).")
@click.option("--metadata", "metadata_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="metadata.json from the instrument stage.")
@click.option("-k", "k", type=int, default=5, help="Hit-distance threshold in lines.")
@click.option("--out", "out_override", type=click.Path(file_okay=False), default=None)
@click.pass_context
def evaluate(ctx, changeset_path, metadata_path, k, out_override):
    """Score generated spans against the annotated ground truth."""
    out = _out_dir(ctx, out_override)
    stage = _load_json(changeset_path, "changeset stage file")
    gt_docs = stage.get("ground_truth", [])
    if not gt_docs:
        raise click.ClickException(
            "changeset stage file has no ground truth; extract from --json input"
        )
    from .changeset import GroundTruthChange

    gt = [
        GroundTruthChange(
            path=g["path"],
            change_id=g["id"],
            relevant=g["relevant"],
            ideal_span=tuple(g["ideal_span"]) if g.get("ideal_span") else None,
            note=g.get("note", ""),
        )
        for g in gt_docs
    ]
    regions = {
        cid: (r[0], r[1]) for cid, r in stage.get("regions", {}).items()
    }

    metadata = _load_json(metadata_path, "instrumentation metadata")
    applied = set(metadata.get("applied", []))
    generated = [
        GeneratedSpan(
            path=s["path"],
            start=s["new_range"]["start"],
            end=s["new_range"]["end"],
            name=s["name"],
        )
        for p in metadata.get("plans", [])
        for s in p.get("spans", [])
        if s["name"] in applied
    ]
    report = evalkit.compute_metrics(generated, gt, k, regions)
    path = _write_json(out / "evaluation.json", report.to_doc())
    click.echo(
        f"wrote {path} (precision@{k}={report.precision_at_k} "
        f"recall@{k}={report.recall_at_k} specificity@{k}={report.specificity_at_k})"
    )


def _safe_name(source: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", source)


@main.command()
@click.option("--analysis", "analysis_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_override", type=click.Path(file_okay=False), default=None)
@click.pass_context
def report(ctx, analysis_path, out_override):
    """Render plot-ready CSVs (CI bars, Q-Q curves) from analysis.json."""
    out = _out_dir(ctx, out_override)
    doc = _load_json(analysis_path, "analysis file")

    ci_path = out / "ci_bars.csv"
    with open(ci_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["source", "kind", "median_pct", "ci_lower", "ci_upper", "verdict", "n_pairs"]
        )
        for kind in ("endpoints", "spans"):
            for source, d in sorted(doc.get(kind, {}).items()):
                writer.writerow(
                    [source, kind[:-1], d["median_pct"], d["ci"][0], d["ci"][1],
                     d["verdict"], d["n_pairs"]]
                )

    qq_files = []
    for source, dist in sorted(doc.get("distributions", {}).items()):
        qq_path = out / f"qq_{_safe_name(source)}.csv"
        with open(qq_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["percentile", "quantile_a", "quantile_b"])
            writer.writerows(dist["qq"])
        qq_files.append(qq_path.name)
    click.echo(f"wrote {ci_path} and {len(qq_files)} Q-Q files in {out}")


if __name__ == "__main__":
    main()
