"""Sandboxed candidate execution: harness building, timed runs, batching.

Each run happens in its own subprocess with a fixed timeout.  The harness is
a self-contained program that loads the candidate, runs the task's checks
with fixed RNG state, and prints exactly one JSON record on stdout; all
candidate prints are redirected to a scratch stream so the record stays
parseable.
"""

from __future__ import annotations

import contextlib
import hashlib
import io
import json
import os
import random
import subprocess
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .errors import TemplateError
from .model import BenchmarkKind, Candidate, Correctness, RunConfig, Task

STDERR_TAIL_CAP = 2000
KILL_GRACE_S = 2.0
SCRATCH_ENV_VAR = "PAIROPT_SCRATCH"


class FailureKind(str, Enum):
    TIMEOUT = "timeout"
    NONZERO_EXIT = "nonzero_exit"
    EXCEPTION = "exception"
    MISMATCH = "mismatch"


@dataclass
class FailureSignal:
    kind: FailureKind
    exit_status: Optional[int] = None
    error_type: Optional[str] = None
    stderr_tail: str = ""
    mismatch: Optional[tuple] = None  # (input, expected, actual)

    def __post_init__(self):
        self.stderr_tail = self.stderr_tail[-STDERR_TAIL_CAP:]
        if self.kind is not FailureKind.MISMATCH:
            self.mismatch = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "exit_status": self.exit_status,
            "error_type": self.error_type,
            "stderr_tail": self.stderr_tail,
            "mismatch": list(self.mismatch) if self.mismatch else None,
        }


@dataclass
class ElapsedStats:
    """Wall-clock seconds of the successful measured runs."""

    runs: list[float] = field(default_factory=list)

    @property
    def successes(self) -> int:
        return len(self.runs)

    @property
    def mean_s(self) -> Optional[float]:
        if not self.runs:
            return None
        return sum(self.runs) / len(self.runs)


class RunPurpose(str, Enum):
    CORRECTNESS = "correctness"
    TIMING = "timing"
    PROFILING = "profiling"


@dataclass
class ExecutionRequest:
    harness_text: str
    timeout_s: float
    purpose: RunPurpose = RunPurpose.CORRECTNESS


@dataclass
class RunResult:
    passed: bool
    elapsed_s: Optional[float]
    failure: Optional[FailureSignal] = None
    wall_s: Optional[float] = None  # orchestrator-side, includes startup


@dataclass
class EvalOutcome:
    verdict: Correctness
    stats: ElapsedStats
    failure: Optional[FailureSignal] = None


_HARNESS_TEMPLATE = '''\
import contextlib, copy, io, json, random, sys, time, traceback

_SOURCE = @SOURCE@
_ENTRY = @ENTRY@
_KIND = @KIND@
_CASES = @CASES@


def _emit(record):
    sys.stdout.write(json.dumps(record) + "\\n")
    sys.stdout.flush()


def _resolve(ns):
    if _KIND == "mercury":
        cls = ns.get("Solution")
        if cls is None:
            raise NameError("class Solution is not defined")
        return getattr(cls(), _ENTRY)
    fn = ns.get(_ENTRY)
    if fn is None:
        raise NameError("entry point %r is not defined" % _ENTRY)
    return fn


def _main():
    random.seed(0)
    scratch = io.StringIO()
    elapsed = None
    try:
        ns = {"__name__": "candidate"}
        with contextlib.redirect_stdout(scratch):
            exec(compile(_SOURCE, "candidate.py", "exec"), ns)
            fn = _resolve(ns)
        start = time.perf_counter()
        for case in _CASES:
            args = copy.deepcopy(case["input"])
            with contextlib.redirect_stdout(scratch):
                actual = fn(*args)
            if actual != case["expected"]:
                elapsed = time.perf_counter() - start
                _emit({
                    "type": "result", "status": "fail", "elapsed_s": elapsed,
                    "error_type": None, "stderr_tail": "",
                    "mismatch": [case["input"], case["expected"], actual],
                })
                return 0
        elapsed = time.perf_counter() - start
        _emit({
            "type": "result", "status": "pass", "elapsed_s": elapsed,
            "error_type": None, "stderr_tail": "", "mismatch": None,
        })
        return 0
    except BaseException as exc:
        tail = traceback.format_exc()[-2000:]
        _emit({
            "type": "result", "status": "error", "elapsed_s": elapsed,
            "error_type": type(exc).__name__, "stderr_tail": tail,
            "mismatch": None,
        })
        return 0


if __name__ == "__main__":
    sys.exit(_main())
'''


def build_harness(task: Task, candidate_source: str) -> str:
    """Emit a self-contained runnable harness for one candidate.

    The harness seeds the stdlib RNG to 0 before anything runs, so two
    builds of the same (task, candidate) produce byte-identical programs and
    stochastic checks stay reproducible.
    """
    kind = BenchmarkKind(task.benchmark_kind)
    if kind not in (BenchmarkKind.EVALPERF, BenchmarkKind.MERCURY,
                    BenchmarkKind.ENAMEL, BenchmarkKind.CUSTOM):
        raise TemplateError(f"unknown benchmark kind {task.benchmark_kind!r}")
    cases = task.harness_spec.get("cases") if task.harness_spec else None
    if not cases:
        raise TemplateError(f"task {task.task_id}: harness_spec has no cases")
    text = _HARNESS_TEMPLATE
    text = text.replace("@SOURCE@", repr(candidate_source))
    text = text.replace("@ENTRY@", repr(task.entry_point))
    text = text.replace("@KIND@", repr(kind.value))
    text = text.replace("@CASES@", repr(cases))
    return text


def parse_result_line(line: str) -> dict:
    """Parse one harness wire-protocol result record; raises ValueError."""
    record = json.loads(line)
    if not isinstance(record, dict) or record.get("type") != "result":
        raise ValueError("not a result record")
    if record.get("status") not in ("pass", "fail", "error"):
        raise ValueError(f"bad status {record.get('status')!r}")
    return record


def _result_from_record(record: dict) -> RunResult:
    status = record["status"]
    elapsed = record.get("elapsed_s")
    if status == "pass":
        return RunResult(passed=True, elapsed_s=elapsed)
    if status == "fail":
        mismatch = record.get("mismatch")
        failure = FailureSignal(
            kind=FailureKind.MISMATCH,
            mismatch=tuple(mismatch) if mismatch else None,
        )
        return RunResult(passed=False, elapsed_s=elapsed, failure=failure)
    failure = FailureSignal(
        kind=FailureKind.EXCEPTION,
        error_type=record.get("error_type"),
        stderr_tail=record.get("stderr_tail") or "",
    )
    return RunResult(passed=False, elapsed_s=elapsed, failure=failure)


def _scratch_root() -> Optional[str]:
    return os.environ.get(SCRATCH_ENV_VAR)


class SubprocessExecutor:
    """Bounded worker set running harnesses in isolated subprocesses."""

    def __init__(self, workers: int = 16):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = workers
        self._active = 0
        self._peak = 0
        self._gauge_lock = threading.Lock()

    @property
    def peak_concurrency(self) -> int:
        return self._peak

    def run_once(self, req: ExecutionRequest) -> RunResult:
        with self._gauge_lock:
            self._active += 1
            self._peak = max(self._peak, self._active)
        start = time.perf_counter()
        try:
            return self._run_in_sandbox(req, start)
        finally:
            with self._gauge_lock:
                self._active -= 1

    def _run_in_sandbox(self, req: ExecutionRequest, start: float) -> RunResult:
        with tempfile.TemporaryDirectory(prefix="pairopt-run-", dir=_scratch_root()) as workdir:
            harness_path = Path(workdir) / "harness.py"
            harness_path.write_text(req.harness_text, "utf-8")
            try:
                proc = subprocess.run(
                    [sys.executable, str(harness_path)],
                    cwd=workdir,
                    capture_output=True,
                    text=True,
                    timeout=req.timeout_s,
                )
            except subprocess.TimeoutExpired:
                wall = time.perf_counter() - start
                return RunResult(
                    passed=False,
                    elapsed_s=None,
                    failure=FailureSignal(kind=FailureKind.TIMEOUT),
                    wall_s=wall,
                )
            wall = time.perf_counter() - start
            if proc.returncode != 0:
                return RunResult(
                    passed=False,
                    elapsed_s=None,
                    failure=FailureSignal(
                        kind=FailureKind.NONZERO_EXIT,
                        exit_status=proc.returncode,
                        stderr_tail=proc.stderr,
                    ),
                    wall_s=wall,
                )
            lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
            try:
                record = parse_result_line(lines[-1]) if lines else None
                if record is None:
                    raise ValueError("empty harness output")
            except (ValueError, json.JSONDecodeError):
                return RunResult(
                    passed=False,
                    elapsed_s=None,
                    failure=FailureSignal(
                        kind=FailureKind.NONZERO_EXIT,
                        exit_status=proc.returncode,
                        stderr_tail=proc.stderr or proc.stdout,
                    ),
                    wall_s=wall,
                )
            result = _result_from_record(record)
            result.wall_s = wall
            return result

    def run_batch(self, requests: list[ExecutionRequest]) -> list[RunResult]:
        """Run requests concurrently; results come back in request order."""
        if not requests:
            return []
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(self.run_once, requests))

    def evaluate(self, task: Task, source: str, cfg: RunConfig) -> EvalOutcome:
        """Run the harness timing_runs times; verdict from the first run."""
        harness = build_harness(task, source)
        req = ExecutionRequest(
            harness_text=harness,
            timeout_s=cfg.correctness_timeout_s,
            purpose=RunPurpose.CORRECTNESS,
        )
        results = [self.run_once(req) for _ in range(cfg.timing_runs)]
        return _combine_runs(results)


def _combine_runs(results: list[RunResult]) -> EvalOutcome:
    stats = ElapsedStats(runs=[r.elapsed_s for r in results if r.passed and r.elapsed_s is not None])
    first = results[0]
    if first.passed:
        return EvalOutcome(verdict=Correctness.CORRECT, stats=stats)
    if first.failure is not None and first.failure.kind is FailureKind.MISMATCH:
        return EvalOutcome(verdict=Correctness.INCORRECT, stats=stats, failure=first.failure)
    return EvalOutcome(verdict=Correctness.ERROR, stats=stats, failure=first.failure)


def _deterministic_elapsed(task_id: str, source: str) -> float:
    digest = hashlib.sha256(f"{task_id}\x00{source}".encode("utf-8")).digest()
    frac = int.from_bytes(digest[:8], "big") / 2**64
    return 0.01 + 0.49 * frac


class InProcessExecutor:
    """Deterministic fake backend for replayed runs and hermetic tests.

    Verdicts come from really executing the candidate's checks in-process;
    elapsed times are synthesized from a content hash so repeated runs yield
    byte-identical artifacts.
    """

    def __init__(self, workers: int = 16):
        self.workers = workers
        self.peak_concurrency = 0

    def evaluate(self, task: Task, source: str, cfg: RunConfig) -> EvalOutcome:
        build_harness(task, source)  # surfaces TemplateError exactly like the real path
        verdict, failure = self._check(task, source)
        if verdict is Correctness.ERROR:
            stats = ElapsedStats(runs=[])
        else:
            t = _deterministic_elapsed(task.task_id, source)
            stats = ElapsedStats(runs=[t] * cfg.timing_runs)
        if verdict is not Correctness.CORRECT:
            return EvalOutcome(verdict=verdict, stats=stats, failure=failure)
        return EvalOutcome(verdict=verdict, stats=stats)

    def _check(self, task: Task, source: str):
        random.seed(0)
        scratch = io.StringIO()
        try:
            ns = {"__name__": "candidate"}
            with contextlib.redirect_stdout(scratch):
                exec(compile(source, "candidate.py", "exec"), ns)
                if task.benchmark_kind == BenchmarkKind.MERCURY:
                    fn = getattr(ns["Solution"](), task.entry_point)
                else:
                    fn = ns[task.entry_point]
            for case in task.harness_spec["cases"]:
                args = json.loads(json.dumps(case["input"]))
                with contextlib.redirect_stdout(scratch):
                    actual = fn(*args)
                if actual != case["expected"]:
                    failure = FailureSignal(
                        kind=FailureKind.MISMATCH,
                        mismatch=(case["input"], case["expected"], actual),
                    )
                    return Correctness.INCORRECT, failure
            return Correctness.CORRECT, None
        except BaseException as exc:
            failure = FailureSignal(
                kind=FailureKind.EXCEPTION,
                error_type=type(exc).__name__,
                stderr_tail=f"{type(exc).__name__}: {exc}",
            )
            return Correctness.ERROR, failure


def evaluate_candidate(task: Task, candidate: Candidate, cfg: RunConfig,
                       backend=None) -> EvalOutcome:
    """Evaluate one candidate's correctness and timing on its task."""
    if backend is None:
        backend = SubprocessExecutor(workers=cfg.workers)
    return backend.evaluate(task, candidate.source, cfg)
