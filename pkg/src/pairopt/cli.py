"""Command-line entry point, task loading, and run-directory persistence.

Run directory layout:

    out/
      manifest.json          written once, before round 0
      tasks.json             snapshot of the loaded task set
      pools/<task_id>/       cand_<id>.py + cand_<id>.json sidecars
      rounds/round_<r>/      report.json, report.csv, transcripts.jsonl,
                             best_elapsed.json, prompts/<task_id>_<n>.txt
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path
from typing import Optional

from .errors import ConfigError, PairoptError, ProviderUnavailable, SchemaError
from .executor import InProcessExecutor, SubprocessExecutor
from .metrics import RoundReport, build_round_report
from .model import BenchmarkKind, CandidatePool, RunConfig, RunMode, Task
from .profiler import FakeProfiler, ShimProfiler
from .providers import HttpChatProvider, ReplayProvider
from .refinement import Dependencies, RoundOutcome, generation_pass, run_round
from .similarity import FileEmbeddingCache, HashedNgramEmbedder

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3


def load_tasks(path: str | Path, benchmark_kind: Optional[str] = None) -> list[Task]:
    """Load the documented JSON task schema into Task records.

    Each entry needs task_id, description, entry_point, and a harness_spec
    with a non-empty cases list; reference_runtimes entries may be bare
    runtimes (weight 1.0) or [runtime, weight] pairs.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"task file {path} does not exist", path=str(path))
    try:
        raw = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}", path=str(path)) from exc
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: top level must be a list of tasks", path=str(path))
    tasks: list[Task] = []
    seen: set[str] = set()
    for i, entry in enumerate(raw):
        for key in ("task_id", "description", "entry_point", "harness_spec"):
            if key not in entry:
                raise SchemaError(f"{path}: task #{i} missing {key!r}",
                                  path=str(path), field=key)
        task_id = entry["task_id"]
        if task_id in seen:
            raise SchemaError(f"{path}: duplicate task_id {task_id!r}",
                              path=str(path), field="task_id")
        seen.add(task_id)
        refs = entry.get("reference_runtimes")
        if refs is not None:
            refs = [
                (float(r), 1.0) if not isinstance(r, (list, tuple)) else (float(r[0]), float(r[1]))
                for r in refs
            ]
        kind = entry.get("benchmark_kind", benchmark_kind or "custom")
        try:
            tasks.append(Task(
                task_id=task_id,
                description=entry["description"],
                entry_point=entry["entry_point"],
                harness_spec=entry["harness_spec"],
                benchmark_kind=BenchmarkKind(kind),
                reference_runtimes=refs,
                code_stub=entry.get("code_stub"),
            ))
        except ValueError as exc:
            raise SchemaError(f"{path}: task {task_id!r}: {exc}",
                              path=str(path), field=task_id) from exc
    return tasks


def _environment_fingerprint() -> dict:
    import numpy

    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": numpy.__version__,
    }


def write_manifest(out_dir: Path, cfg: RunConfig, tasks_path: Optional[str],
                   tasks: list[Task], provider_id: str, embedder_id: str,
                   deterministic: bool) -> None:
    task_blob = json.dumps([t.task_id for t in tasks], sort_keys=True)
    manifest = {
        "config": {k: (v.value if hasattr(v, "value") else v)
                   for k, v in dataclasses.asdict(cfg).items()},
        "task_set": {
            "path": tasks_path,
            "count": len(tasks),
            "id_digest": hashlib.sha256(task_blob.encode("utf-8")).hexdigest(),
        },
        "providers": {"generation": provider_id, "embedding": embedder_id},
        "environment": _environment_fingerprint(),
        "deterministic": deterministic,
        # replayed runs must hash identically, so no wall-clock stamps there
        "started_at": None if deterministic else time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), "utf-8",
    )


def _persist_pools(out_dir: Path, pools: dict[str, CandidatePool]) -> None:
    for task_id, pool in pools.items():
        pool_dir = out_dir / "pools" / task_id
        pool_dir.mkdir(parents=True, exist_ok=True)
        for cand in pool.entries:
            (pool_dir / f"cand_{cand.candidate_id}.py").write_text(cand.source, "utf-8")
            meta = {
                "id": cand.candidate_id,
                "origin": cand.origin.value,
                "round": cand.round_created,
                "parent_ids": cand.parent_ids,
                "correctness": cand.correctness.value,
                "elapsed_runs": cand.elapsed.runs if cand.elapsed else None,
                "failure": cand.failure.to_dict() if cand.failure else None,
            }
            (pool_dir / f"cand_{cand.candidate_id}.json").write_text(
                json.dumps(meta, indent=2, sort_keys=True), "utf-8",
            )


def _persist_round(out_dir: Path, outcome: RoundOutcome, report: RoundReport,
                   pools: dict[str, CandidatePool]) -> None:
    round_dir = out_dir / "rounds" / f"round_{outcome.round_index}"
    prompts_dir = round_dir / "prompts"
    prompts_dir.mkdir(parents=True, exist_ok=True)
    (round_dir / "report.json").write_text(report.to_json(), "utf-8")
    (round_dir / "report.csv").write_text(report.to_csv(), "utf-8")
    with (round_dir / "transcripts.jsonl").open("w", encoding="utf-8") as fh:
        for call in outcome.calls:
            fh.write(json.dumps(call.to_record(), sort_keys=True) + "\n")
    counts: dict[str, int] = {}
    for bundle in outcome.prompts:
        n = counts.get(bundle.task_id, 0)
        counts[bundle.task_id] = n + 1
        (prompts_dir / f"{bundle.task_id}_{n}.txt").write_text(bundle.text, "utf-8")
    snapshot = {}
    for task_id, pool in sorted(pools.items()):
        best = pool.best_correct()
        snapshot[task_id] = (
            {"candidate_id": best.candidate_id, "mean_elapsed_s": best.mean_elapsed}
            if best else None
        )
    (round_dir / "best_elapsed.json").write_text(
        json.dumps(snapshot, indent=2, sort_keys=True), "utf-8",
    )
    stats = [vars(s) for s in outcome.stats]
    (round_dir / "round_stats.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True), "utf-8",
    )


def run_pipeline(tasks: list[Task], cfg: RunConfig, deps: Dependencies,
                 out_dir: str | Path, tasks_path: Optional[str] = None,
                 deterministic: bool = False) -> RoundReport:
    """Generation pass plus T refinement rounds, with per-round artifacts."""
    if not tasks:
        raise ConfigError("no tasks to run")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir, cfg, tasks_path, tasks, deps.provider.provider_id,
                   deps.embedder.provider_id, deterministic)
    (out_dir / "tasks.json").write_text(json.dumps(
        [{
            "task_id": t.task_id,
            "description": t.description,
            "entry_point": t.entry_point,
            "benchmark_kind": t.benchmark_kind.value,
            "harness_spec": t.harness_spec,
            "reference_runtimes": t.reference_runtimes,
            "code_stub": t.code_stub,
        } for t in tasks],
        indent=2, sort_keys=True), "utf-8")

    pools = {t.task_id: CandidatePool(t.task_id) for t in tasks}
    outcome = generation_pass(tasks, pools, deps, cfg)
    report = _report_for(outcome, tasks, pools)
    _persist_round(out_dir, outcome, report, pools)
    _persist_pools(out_dir, pools)

    rounds = 0 if cfg.mode is RunMode.BASELINE else cfg.t_rounds
    for round_index in range(1, rounds + 1):
        outcome = run_round(tasks, pools, deps, cfg, round_index)
        report = _report_for(outcome, tasks, pools)
        _persist_round(out_dir, outcome, report, pools)
        _persist_pools(out_dir, pools)
    return report


def _report_for(outcome: RoundOutcome, tasks, pools) -> RoundReport:
    shapes = {s.task_id: s.shape for s in outcome.stats}
    return build_round_report(
        outcome.round_index, tasks, pools, shapes=shapes,
        prompt_tokens=sum(c.prompt_tokens for c in outcome.calls),
        completion_tokens=sum(c.completion_tokens for c in outcome.calls),
    )


def _pin_cores() -> None:
    """Best-effort pinning to low-utilization cores; silently skipped on failure."""
    try:
        import psutil

        usage = psutil.cpu_percent(interval=0.2, percpu=True)
        idle = {i for i, u in enumerate(usage) if u / 100.0 < 0.02}
        if idle:
            os.sched_setaffinity(0, idle)
    except Exception:
        pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairopt",
        description="Iterative code-efficiency refinement via contrastive candidate pairing",
    )
    parser.add_argument("--tasks", required=True, help="path to the JSON task file")
    parser.add_argument("--benchmark", default=None,
                        choices=[k.value for k in BenchmarkKind],
                        help="default benchmark kind for tasks that omit one")
    parser.add_argument("--mode", default="effipair",
                        choices=[m.value for m in RunMode])
    parser.add_argument("--candidates", type=int, default=3, metavar="N",
                        help="initial candidates per task")
    parser.add_argument("--rounds", type=int, default=3, metavar="T",
                        help="refinement rounds")
    parser.add_argument("--alpha", type=float, default=0.8)
    parser.add_argument("--tau", type=float, default=0.85)
    parser.add_argument("--workers", type=int, default=16)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--provider", default="http", choices=["http", "replay"])
    parser.add_argument("--base-url", default="https://api.openai.com/v1")
    parser.add_argument("--model", default="gpt-4o-mini")
    parser.add_argument("--replay", default=None, help="transcript file for --provider replay")
    parser.add_argument("--embedding-provider", default="offline",
                        help="'offline' or 'cache:<dir>' for a file-backed replay cache")
    parser.add_argument("--executor", default="subprocess", choices=["subprocess", "fake"])
    parser.add_argument("--profiler", default="shim", choices=["shim", "fake"])
    parser.add_argument("--out", required=True, help="run directory")
    parser.add_argument("--strict-pairing", action="store_true")
    parser.add_argument("--pin-cores", action="store_true")
    return parser


def _deps_from_args(args) -> tuple[Dependencies, bool]:
    if args.provider == "replay":
        if not args.replay:
            raise ConfigError("--provider replay requires --replay PATH")
        provider = ReplayProvider(args.replay)
    else:
        provider = HttpChatProvider(base_url=args.base_url, model=args.model)
    if args.embedding_provider == "offline":
        embedder = HashedNgramEmbedder()
    elif args.embedding_provider.startswith("cache:"):
        embedder = FileEmbeddingCache(args.embedding_provider[len("cache:"):])
    else:
        raise ConfigError(f"unknown embedding provider {args.embedding_provider!r}")
    executor = (InProcessExecutor(workers=args.workers) if args.executor == "fake"
                else SubprocessExecutor(workers=args.workers))
    profiler = FakeProfiler() if args.profiler == "fake" else ShimProfiler()
    deterministic = (args.provider == "replay" and args.executor == "fake"
                     and args.profiler == "fake")
    return Dependencies(provider=provider, embedder=embedder,
                        executor=executor, profiler=profiler), deterministic


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(
            n_initial=args.candidates,
            t_rounds=args.rounds,
            alpha=args.alpha,
            tau=args.tau,
            workers=args.workers,
            base_seed=args.seed,
            mode=RunMode(args.mode),
            strict_pairing=args.strict_pairing,
        )
        tasks = load_tasks(args.tasks, args.benchmark)
        deps, deterministic = _deps_from_args(args)
    except ProviderUnavailable as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (ConfigError, SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.pin_cores:
        _pin_cores()
    try:
        report = run_pipeline(tasks, cfg, deps, args.out,
                              tasks_path=args.tasks, deterministic=deterministic)
    except ProviderUnavailable as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PairoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    timing = f"{report.mean_timing_s:.4f}s" if report.mean_timing_s is not None else "n/a"
    print(f"pass@1 {report.pass_at_1:.2f}% | mean timing {timing} | "
          f"tokens {report.prompt_tokens}+{report.completion_tokens}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
