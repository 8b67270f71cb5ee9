"""Synchronized duet execution of two service versions.

Both SUTs run as OS processes pinned to disjoint CPU cores (one core
left to the OS). A closed-loop client sends byte-identical request
pairs, releasing the two requests at a shared barrier so environmental
noise hits both sides alike; per-pair latencies are measured from the
release instant to the last byte.
"""

from __future__ import annotations

import csv
import datetime
import json
import os
import random
import shutil
import signal
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import DuetBenchError, HealthCheckTimeout

SEQ_HEADER = "X-Duet-Seq"
CLIENT_PAIRS_COLUMNS = ["seq", "endpoint", "x_a_ns", "x_b_ns", "status_a", "status_b"]
DEFAULT_SYNC_BOUND_NS = 1_000_000


@dataclass(frozen=True)
class WorkloadStep:
    method: str
    path_template: str
    params: tuple[tuple[str, tuple[str, ...]], ...] = ()  # name -> choices
    weight: float = 1.0
    endpoint_id: str = ""

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("workload weights must be positive")
        if not self.endpoint_id:
            object.__setattr__(self, "endpoint_id", self.path_template)

    def render(self, rng: random.Random) -> str:
        values = {name: rng.choice(choices) for name, choices in self.params}
        return self.path_template.format(**values)


@dataclass
class RunConfig:
    cmd_a: list[str]
    cmd_b: list[str]
    base_url_a: str
    base_url_b: str
    env_a: dict[str, str] = field(default_factory=dict)
    env_b: dict[str, str] = field(default_factory=dict)
    cpu_set_a: tuple[int, ...] = ()
    cpu_set_b: tuple[int, ...] = ()
    reserved_os_core: int | None = None
    warmup_requests: int = 10
    measured_requests: int = 100
    workload: list[WorkloadStep] = field(default_factory=list)
    health_path: str = "/healthz"
    timeout_ms: int = 5000
    health_deadline_s: float = 30.0
    seed: int = 0
    sync_bound_ns: int = DEFAULT_SYNC_BOUND_NS

    def validate(self) -> None:
        overlap = set(self.cpu_set_a) & set(self.cpu_set_b)
        if overlap:
            raise DuetBenchError(f"cpu sets overlap on cores {sorted(overlap)}")
        if self.reserved_os_core is not None and self.reserved_os_core in (
            set(self.cpu_set_a) | set(self.cpu_set_b)
        ):
            raise DuetBenchError("reserved OS core must not be assigned to a SUT")
        if not self.workload:
            raise DuetBenchError("workload must contain at least one step")


@dataclass(frozen=True)
class PairedMeasurement:
    request_seq: int
    endpoint: str
    x_a_ns: int
    x_b_ns: int
    status_a: int
    status_b: int
    dispatch_skew_ns: int


@dataclass
class DuetHandles:
    proc_a: subprocess.Popen
    proc_b: subprocess.Popen
    cfg: RunConfig
    affinity_warnings: list[str] = field(default_factory=list)
    started_at: str = ""

    def terminate(self) -> None:
        for proc in (self.proc_a, self.proc_b):
            if proc.poll() is None:
                proc.send_signal(signal.SIGTERM)
        deadline = time.monotonic() + 5
        for proc in (self.proc_a, self.proc_b):
            try:
                proc.wait(timeout=max(0.1, deadline - time.monotonic()))
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()


def _set_affinity(proc: subprocess.Popen, cores: tuple[int, ...], tag: str, warnings: list[str]):
    if not cores:
        return
    try:
        os.sched_setaffinity(proc.pid, set(cores))
    except (AttributeError, OSError) as exc:
        warnings.append(f"affinity unsupported for {tag}: {exc}")


def _wait_healthy(base_url: str, path: str, deadline_s: float, proc: subprocess.Popen, tag: str):
    deadline = time.monotonic() + deadline_s
    url = base_url.rstrip("/") + path
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            raise HealthCheckTimeout(tag, f"version {tag} exited with {proc.returncode}")
        try:
            if httpx.get(url, timeout=1.0).status_code == 200:
                return
        except httpx.HTTPError:
            pass
        time.sleep(0.05)
    raise HealthCheckTimeout(tag)


def launch_duet(cfg: RunConfig) -> DuetHandles:
    """Start both SUT processes with affinity and wait for health."""
    cfg.validate()
    started_at = datetime.datetime.now(datetime.timezone.utc).isoformat()

    def start(cmd, env_extra):
        env = dict(os.environ)
        env.update(env_extra)
        return subprocess.Popen(cmd, env=env)

    proc_a = start(cfg.cmd_a, cfg.env_a)
    proc_b = start(cfg.cmd_b, cfg.env_b)
    handles = DuetHandles(proc_a, proc_b, cfg, started_at=started_at)
    _set_affinity(proc_a, cfg.cpu_set_a, "A", handles.affinity_warnings)
    _set_affinity(proc_b, cfg.cpu_set_b, "B", handles.affinity_warnings)
    try:
        _wait_healthy(cfg.base_url_a, cfg.health_path, cfg.health_deadline_s, proc_a, "A")
        _wait_healthy(cfg.base_url_b, cfg.health_path, cfg.health_deadline_s, proc_b, "B")
    except HealthCheckTimeout:
        handles.terminate()
        raise
    return handles


@dataclass
class WorkloadResult:
    pairs: list[PairedMeasurement]
    dropped: int
    completed: bool
    request_log: list[tuple[int, str, str]]  # (seq, method, path)
    max_dispatch_skew_ns: int


def build_request_sequence(cfg: RunConfig) -> list[tuple[int, WorkloadStep, str]]:
    """Deterministic request plan: pure function of (seed, workload spec)."""
    rng = random.Random(cfg.seed)
    total = cfg.warmup_requests + cfg.measured_requests
    weights = [s.weight for s in cfg.workload]
    plan = []
    for seq in range(total):
        step = rng.choices(cfg.workload, weights=weights, k=1)[0]
        plan.append((seq, step, step.render(rng)))
    return plan


def run_workload(handles: DuetHandles, cfg: RunConfig | None = None) -> WorkloadResult:
    """Drive the synchronized paired workload against both SUTs."""
    cfg = cfg or handles.cfg
    plan = build_request_sequence(cfg)
    timeout_s = cfg.timeout_ms / 1000.0

    client_a = httpx.Client(base_url=cfg.base_url_a, timeout=timeout_s)
    client_b = httpx.Client(base_url=cfg.base_url_b, timeout=timeout_s)

    pairs: list[PairedMeasurement] = []
    request_log: list[tuple[int, str, str]] = []
    dropped = 0
    completed = True
    max_skew = 0

    try:
        for seq, step, path in plan:
            if handles.proc_a.poll() is not None or handles.proc_b.poll() is not None:
                completed = False
                break
            request_log.append((seq, step.method, path))
            barrier = threading.Barrier(2)
            results: dict[str, tuple[int, int, int] | None] = {"A": None, "B": None}

            def shoot(tag, client):
                try:
                    barrier.wait(timeout=timeout_s)
                    dispatch = time.perf_counter_ns()
                    response = client.request(
                        step.method, path, headers={SEQ_HEADER: str(seq)}
                    )
                    response.read()
                    latency = time.perf_counter_ns() - dispatch
                    results[tag] = (dispatch, latency, response.status_code)
                except (httpx.HTTPError, threading.BrokenBarrierError):
                    results[tag] = None

            threads = [
                threading.Thread(target=shoot, args=("A", client_a)),
                threading.Thread(target=shoot, args=("B", client_b)),
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()

            if results["A"] is None or results["B"] is None:
                if seq >= cfg.warmup_requests:
                    dropped += 1
                continue
            da, la, sa = results["A"]
            db, lb, sb = results["B"]
            skew = abs(da - db)
            max_skew = max(max_skew, skew)
            if seq < cfg.warmup_requests:
                continue
            if sa >= 400 or sb >= 400:
                dropped += 1
                continue
            pairs.append(
                PairedMeasurement(
                    request_seq=seq,
                    endpoint=step.endpoint_id,
                    x_a_ns=la,
                    x_b_ns=lb,
                    status_a=sa,
                    status_b=sb,
                    dispatch_skew_ns=skew,
                )
            )
    finally:
        client_a.close()
        client_b.close()

    return WorkloadResult(
        pairs=pairs,
        dropped=dropped,
        completed=completed,
        request_log=request_log,
        max_dispatch_skew_ns=max_skew,
    )


@dataclass(frozen=True)
class BenchmarkArtifact:
    directory: Path
    has_spans_a: bool
    has_spans_b: bool


def collect_artifacts(
    handles: DuetHandles,
    result: WorkloadResult,
    out_dir: str | Path,
    span_file_a: str | Path | None = None,
    span_file_b: str | Path | None = None,
) -> BenchmarkArtifact:
    """Assemble the run's artifact directory.

    Contents: ``client_pairs.csv``, ``spans-A.ndjson``, ``spans-B.ndjson``
    (when the SUTs produced them), and ``run_metadata.json``. Missing span
    files are noted, not errors: A/A arms may run uninstrumented.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = handles.cfg

    with open(out / "client_pairs.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CLIENT_PAIRS_COLUMNS)
        for p in result.pairs:
            writer.writerow(
                [p.request_seq, p.endpoint, p.x_a_ns, p.x_b_ns, p.status_a, p.status_b]
            )

    present = {}
    for tag, src in (("A", span_file_a), ("B", span_file_b)):
        dst = out / f"spans-{tag}.ndjson"
        if src is not None and Path(src) != dst and Path(src).exists():
            shutil.copyfile(src, dst)
        present[tag] = dst.exists()

    metadata = {
        "seed": cfg.seed,
        "cpu_set_a": list(cfg.cpu_set_a),
        "cpu_set_b": list(cfg.cpu_set_b),
        "reserved_os_core": cfg.reserved_os_core,
        "warmup_requests": cfg.warmup_requests,
        "measured_requests": cfg.measured_requests,
        "started_at": handles.started_at,
        "finished_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "completed": result.completed,
        "dropped_pairs": result.dropped,
        "max_dispatch_skew_ns": result.max_dispatch_skew_ns,
        "affinity_warnings": handles.affinity_warnings,
        "spans_a_present": present["A"],
        "spans_b_present": present["B"],
    }
    (out / "run_metadata.json").write_text(json.dumps(metadata, indent=2))
    return BenchmarkArtifact(out, present["A"], present["B"])
