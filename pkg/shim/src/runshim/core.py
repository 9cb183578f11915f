"""Candidate loading, timed harness runs, and the two profiling backends.

The wire protocol is line-delimited JSON on stdout:

    {"type": "result", "status": "pass|fail|error", "elapsed_s": ...,
     "error_type": ..., "stderr_tail": ..., "mismatch": [in, want, got]|null}
    {"type": "line", "file": ..., "line": ..., "cpu_percent": ...,
     "alloc_count": ..., "peak_mem_bytes": ...}
    {"type": "trailer", "total_profiled_s": ..., "repetitions": ...}

Profile mode computes repetitions = max(1, ceil(1.0 / single-call time))
from one timed call (after an untimed warm call) and then runs that many
repetitions under the selected backend.
"""

from __future__ import annotations

import contextlib
import copy
import hashlib
import io
import json
import math
import os
import random
import signal
import sys
import time
import tracemalloc
import traceback
from collections import Counter
from pathlib import Path

BACKEND_ENV_VAR = "RUNSHIM_BACKEND"   # "sampling" (default) or "fake"
SCRATCH_ENV_VAR = "RUNSHIM_SCRATCH"
SAMPLING_INTERVAL_S = 0.001
MIN_PROFILED_S = 1.0
STDERR_TAIL_CAP = 2000


def _emit(record: dict) -> None:
    sys.stdout.write(json.dumps(record) + "\n")
    sys.stdout.flush()


def _result(status: str, elapsed_s=None, error_type=None, stderr_tail="",
            mismatch=None) -> dict:
    return {
        "type": "result",
        "status": status,
        "elapsed_s": elapsed_s,
        "error_type": error_type,
        "stderr_tail": stderr_tail[-STDERR_TAIL_CAP:],
        "mismatch": mismatch,
    }


def _load_harness(harness_file: str) -> dict:
    spec = json.loads(Path(harness_file).read_text("utf-8"))
    for key in ("entry_point", "cases"):
        if key not in spec:
            raise KeyError(f"harness file missing {key!r}")
    return spec


def _scratch_stream():
    scratch_dir = os.environ.get(SCRATCH_ENV_VAR)
    if scratch_dir:
        return open(Path(scratch_dir) / f"shim-{os.getpid()}.out", "a",
                    encoding="utf-8")
    return io.StringIO()


def _load_candidate(candidate_file: str, spec: dict, scratch):
    """Exec the candidate and resolve its entry point callable.

    The source is compiled under its real path so profiler frames can be
    attributed back to candidate lines.
    """
    path = str(Path(candidate_file))
    source = Path(candidate_file).read_text("utf-8")
    ns = {"__name__": "candidate"}
    with contextlib.redirect_stdout(scratch):
        exec(compile(source, path, "exec"), ns)
    if spec.get("benchmark_kind") == "mercury":
        cls = ns.get("Solution")
        if cls is None:
            raise NameError("class Solution is not defined")
        return getattr(cls(), spec["entry_point"]), path, source
    fn = ns.get(spec["entry_point"])
    if fn is None:
        raise NameError("entry point %r is not defined" % spec["entry_point"])
    return fn, path, source


def _run_cases(fn, cases, scratch):
    """One pass over all cases; returns the first mismatch triple or None."""
    for case in cases:
        args = copy.deepcopy(case["input"])
        with contextlib.redirect_stdout(scratch):
            actual = fn(*args)
        if actual != case["expected"]:
            return [case["input"], case["expected"], actual]
    return None


def run_correctness(candidate_file: str, harness_file: str) -> int:
    """Single timed harness execution with fixed RNG state."""
    random.seed(0)
    scratch = _scratch_stream()
    try:
        spec = _load_harness(harness_file)
        fn, _, _ = _load_candidate(candidate_file, spec, scratch)
        start = time.perf_counter()
        mismatch = _run_cases(fn, spec["cases"], scratch)
        elapsed = time.perf_counter() - start
        if mismatch is not None:
            _emit(_result("fail", elapsed_s=elapsed, mismatch=mismatch))
        else:
            _emit(_result("pass", elapsed_s=elapsed))
        return 0
    except BaseException as exc:
        _emit(_result("error", error_type=type(exc).__name__,
                      stderr_tail=traceback.format_exc()))
        return 0
    finally:
        scratch.close() if hasattr(scratch, "close") else None


class SamplingBackend:
    """SIGPROF-driven line sampler plus tracemalloc allocation counts."""

    def profile(self, fn, cases, candidate_path, source, repetitions, scratch):
        samples: Counter = Counter()

        def handler(signum, frame):
            f = frame
            while f is not None:
                if f.f_code.co_filename == candidate_path:
                    samples[f.f_lineno] += 1
                    break
                f = f.f_back

        previous = signal.signal(signal.SIGPROF, handler)
        signal.setitimer(signal.ITIMER_PROF, SAMPLING_INTERVAL_S,
                         SAMPLING_INTERVAL_S)
        tracemalloc.start()
        start = time.perf_counter()
        try:
            for _ in range(repetitions):
                _run_cases(fn, cases, scratch)
        finally:
            total_s = time.perf_counter() - start
            signal.setitimer(signal.ITIMER_PROF, 0.0, 0.0)
            signal.signal(signal.SIGPROF, previous)
            snapshot = tracemalloc.take_snapshot()
            tracemalloc.stop()
        allocs: dict[int, int] = {}
        peaks: dict[int, int] = {}
        for stat in snapshot.statistics("lineno"):
            frame = stat.traceback[0]
            if frame.filename == candidate_path:
                allocs[frame.lineno] = allocs.get(frame.lineno, 0) + stat.count
                peaks[frame.lineno] = peaks.get(frame.lineno, 0) + stat.size
        total_samples = sum(samples.values())
        records = []
        for lineno in sorted(set(samples) | set(allocs)):
            cpu = (100.0 * samples[lineno] / total_samples
                   if total_samples else 0.0)
            records.append({
                "type": "line",
                "file": candidate_path,
                "line": lineno,
                "cpu_percent": cpu,
                "alloc_count": allocs.get(lineno, 0),
                "peak_mem_bytes": peaks.get(lineno),
            })
        return records, total_s


class FakeBackend:
    """Deterministic content-hash profile for hermetic tests.

    Shares and allocation counts depend only on the candidate source, so the
    same input yields the same records on every run and machine.
    """

    def profile(self, fn, cases, candidate_path, source, repetitions, scratch):
        start = time.perf_counter()
        for _ in range(repetitions):
            _run_cases(fn, cases, scratch)
        total_s = time.perf_counter() - start
        shares = []
        for lineno, text in enumerate(source.splitlines(), start=1):
            if not text.strip():
                continue
            digest = hashlib.sha256(f"{lineno}|{text}".encode("utf-8")).digest()
            shares.append((lineno,
                           int.from_bytes(digest[:4], "big") % 1000,
                           int.from_bytes(digest[4:8], "big") % 300))
        total = sum(s for _, s, _ in shares) or 1
        records = [{
            "type": "line",
            "file": candidate_path,
            "line": lineno,
            "cpu_percent": 100.0 * share / total,
            "alloc_count": alloc,
            "peak_mem_bytes": None,
        } for lineno, share, alloc in shares]
        return records, total_s


def _backend():
    name = os.environ.get(BACKEND_ENV_VAR, "sampling")
    if name == "fake":
        return FakeBackend()
    if name == "sampling":
        return SamplingBackend()
    raise ValueError(f"unknown profiler backend {name!r}")


def run_profile(candidate_file: str, harness_file: str) -> int:
    """Repetition-rule profiling: warm call, timed call, then the backend."""
    random.seed(0)
    scratch = _scratch_stream()
    try:
        backend = _backend()
        spec = _load_harness(harness_file)
        fn, path, source = _load_candidate(candidate_file, spec, scratch)
        cases = spec["cases"]
        _run_cases(fn, cases, scratch)  # warm call, untimed
        start = time.perf_counter()
        mismatch = _run_cases(fn, cases, scratch)
        single_s = time.perf_counter() - start
        if mismatch is not None:
            _emit(_result("fail", elapsed_s=single_s, mismatch=mismatch))
            return 0
        repetitions = max(1, math.ceil(MIN_PROFILED_S / single_s))
        records, measured_s = backend.profile(fn, cases, path, source,
                                              repetitions, scratch)
        _emit(_result("pass", elapsed_s=single_s))
        for record in records:
            _emit(record)
        _emit({
            "type": "trailer",
            "total_profiled_s": measured_s,
            "repetitions": repetitions,
        })
        return 0
    except BaseException as exc:
        _emit(_result("error", error_type=type(exc).__name__,
                      stderr_tail=traceback.format_exc()))
        return 1
    finally:
        scratch.close() if hasattr(scratch, "close") else None


def shim_run(mode: str, candidate_file: str, harness_file: str) -> int:
    if mode == "correctness":
        return run_correctness(candidate_file, harness_file)
    if mode == "profile":
        return run_profile(candidate_file, harness_file)
    _emit(_result("error", error_type="ValueError",
                  stderr_tail=f"unknown mode {mode!r}"))
    return 2
