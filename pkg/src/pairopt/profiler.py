"""Sampling-profile acquisition, hotspot summarization, and pair contrast.

Raw profiles arrive as per-line records from a profiler backend (the
subprocess shim in production, a deterministic fake in tests).  Summaries
keep only the lines that clear the inclusion thresholds (strictly more than
1% of CPU time, or at least 100 allocations) and the contrast stage diffs
two summaries into the compact signal fed to refinement prompts.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import DomainError, PreconditionViolated, ProfilerParseError, ProfilingTimeout
from .model import Candidate, Task

CPU_THRESHOLD_PCT = 1.0      # strictly greater-than
ALLOC_THRESHOLD = 100        # at least
SUMMARY_BYTE_BUDGET = 4096
MIN_PROFILED_S = 1.0
SAMPLING_INTERVAL_S = 0.001
HOTSPOT_MATCH_JACCARD = 0.6


@dataclass
class LineRecord:
    file: str
    line: int
    cpu_percent: float
    alloc_count: int
    peak_mem_bytes: Optional[int] = None


@dataclass
class RawProfile:
    lines: list[LineRecord]
    total_profiled_s: float
    repetitions: int


@dataclass
class Hotspot:
    line_ref: str
    excerpt: str
    cpu_percent: float
    alloc_count: int
    peak_mem_bytes: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "line_ref": self.line_ref,
            "excerpt": self.excerpt,
            "cpu_percent": self.cpu_percent,
            "alloc_count": self.alloc_count,
            "peak_mem_bytes": self.peak_mem_bytes,
        }


@dataclass
class ProfileSummary:
    hotspots: list[Hotspot]
    omitted_mass: float

    def to_dict(self) -> dict:
        return {
            "hotspots": [h.to_dict() for h in self.hotspots],
            "omitted_mass": self.omitted_mass,
        }


@dataclass
class ContrastSignal:
    reference_id: int
    counterpart_id: int
    timing_delta_s: float
    timing_ratio: float
    counterpart_only_hotspots: list[Hotspot]
    shared_hotspots: list[tuple[Hotspot, Hotspot, float]]  # (minus, plus, cpu diff)
    reference_summary: ProfileSummary
    counterpart_summary: ProfileSummary


@dataclass
class AmdahlEstimate:
    fraction_p: float
    local_speedup_k: float
    global_speedup: float


def amdahl_bound(fraction_p: float, local_speedup_k: float) -> AmdahlEstimate:
    """Global speedup bound 1 / ((1 - p) + p / k)."""
    if not 0.0 <= fraction_p <= 1.0:
        raise DomainError(f"fraction_p must be in [0, 1], got {fraction_p}")
    if local_speedup_k <= 0.0:
        raise DomainError(f"local_speedup_k must be > 0, got {local_speedup_k}")
    total = 1.0 / ((1.0 - fraction_p) + fraction_p / local_speedup_k)
    return AmdahlEstimate(fraction_p=fraction_p, local_speedup_k=local_speedup_k,
                          global_speedup=total)


def summarize(raw: RawProfile, source: str) -> ProfileSummary:
    """Keep lines with cpu > 1.0% or allocs >= 100, sorted by CPU share.

    The 1% boundary is strict and the allocation boundary is weak; exactly
    1.0% with 99 allocations is excluded.
    """
    source_lines = source.splitlines()
    hotspots = []
    omitted = 0.0
    for rec in raw.lines:
        if rec.cpu_percent > CPU_THRESHOLD_PCT or rec.alloc_count >= ALLOC_THRESHOLD:
            excerpt = ""
            if 1 <= rec.line <= len(source_lines):
                excerpt = source_lines[rec.line - 1].strip()
            hotspots.append(Hotspot(
                line_ref=f"{rec.file}:{rec.line}",
                excerpt=excerpt,
                cpu_percent=rec.cpu_percent,
                alloc_count=rec.alloc_count,
                peak_mem_bytes=rec.peak_mem_bytes,
            ))
        else:
            omitted += rec.cpu_percent
    hotspots.sort(key=lambda h: (-h.cpu_percent, h.line_ref))
    included = sum(h.cpu_percent for h in hotspots)
    omitted_mass = max(0.0, 100.0 - included)
    return ProfileSummary(hotspots=hotspots, omitted_mass=omitted_mass)


def render_summary(summary: ProfileSummary, byte_budget: int = SUMMARY_BYTE_BUDGET) -> str:
    """Serialize a summary for prompts, dropping lowest-share hotspots to fit."""
    kept = list(summary.hotspots)
    while True:
        lines = []
        for h in kept:
            mem = f" peak_mem={h.peak_mem_bytes}B" if h.peak_mem_bytes is not None else ""
            lines.append(f"{h.line_ref} cpu={h.cpu_percent:.1f}% allocs={h.alloc_count}{mem} | {h.excerpt}")
        dropped = len(summary.hotspots) - len(kept)
        residual = summary.omitted_mass + sum(
            h.cpu_percent for h in summary.hotspots[len(kept):]
        )
        lines.append(f"(other lines: {residual:.1f}% of CPU time; {dropped} hotspots omitted)"
                     if dropped else f"(other lines: {summary.omitted_mass:.1f}% of CPU time)")
        text = "\n".join(lines)
        if len(text.encode("utf-8")) <= byte_budget or not kept:
            return text
        kept.pop()  # hotspots are sorted by share, so the tail goes first


_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+|[^\sA-Za-z0-9_]")


def _excerpt_tokens(excerpt: str) -> frozenset:
    return frozenset(_TOKEN_RE.findall(excerpt.lower()))


def _matches(a: Hotspot, b: Hotspot) -> bool:
    ta, tb = _excerpt_tokens(a.excerpt), _excerpt_tokens(b.excerpt)
    if not ta or not tb:
        return False
    union = len(ta | tb)
    return len(ta & tb) / union >= HOTSPOT_MATCH_JACCARD


def contrast(p_plus: Candidate, p_minus: Candidate) -> ContrastSignal:
    """Diff the pair's summaries and timings into the refinement signal.

    Hotspots are matched across the two programs by token overlap of their
    source excerpts, not by line number: the paired programs are similar but
    rarely line-aligned.
    """
    if p_plus.profile is None or p_minus.profile is None:
        raise ValueError("both candidates must carry a ProfileSummary")
    e_plus, e_minus = p_plus.mean_elapsed, p_minus.mean_elapsed
    if e_plus is None or e_minus is None:
        raise ValueError("both candidates must carry measured elapsed stats")
    if e_minus < e_plus:
        raise PreconditionViolated("counterpart is faster than the reference")
    only, shared = [], []
    for hot in p_minus.profile.hotspots:
        match = next((h for h in p_plus.profile.hotspots if _matches(hot, h)), None)
        if match is None:
            only.append(hot)
        else:
            shared.append((hot, match, hot.cpu_percent - match.cpu_percent))
    return ContrastSignal(
        reference_id=p_plus.candidate_id,
        counterpart_id=p_minus.candidate_id,
        timing_delta_s=e_minus - e_plus,
        timing_ratio=e_minus / e_plus if e_plus > 0 else math.inf,
        counterpart_only_hotspots=only,
        shared_hotspots=shared,
        reference_summary=p_plus.profile,
        counterpart_summary=p_minus.profile,
    )


def render_contrast(signal: ContrastSignal, amdahl_k: float = 10.0) -> str:
    """Human/LLM-readable rendering of a contrast signal.

    Counterpart-only hotspots are ranked by their Amdahl potential: the
    global speedup bound if that line's share were accelerated by amdahl_k.
    """
    lines = [
        f"The slower candidate takes {signal.timing_delta_s:.4f}s longer "
        f"({signal.timing_ratio:.2f}x the faster candidate's runtime).",
    ]
    ranked = sorted(
        signal.counterpart_only_hotspots,
        key=lambda h: -amdahl_bound(min(1.0, h.cpu_percent / 100.0), amdahl_k).global_speedup,
    )
    if ranked:
        lines.append("Hotspots present only in the slower candidate (highest potential first):")
        for hot in ranked:
            bound = amdahl_bound(min(1.0, hot.cpu_percent / 100.0), amdahl_k)
            lines.append(
                f"- {hot.line_ref} cpu={hot.cpu_percent:.1f}% allocs={hot.alloc_count} "
                f"| {hot.excerpt} (removing this could give up to "
                f"{bound.global_speedup:.2f}x overall)"
            )
    if signal.shared_hotspots:
        lines.append("Hotspots shared by both candidates (slower-minus-faster CPU share):")
        for minus, plus, diff in signal.shared_hotspots:
            lines.append(f"- {minus.line_ref} vs {plus.line_ref}: {diff:+.1f}% | {minus.excerpt}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Profiler backends


def parse_profile_stream(lines: list[str]) -> RawProfile:
    """Parse the shim wire protocol: line records plus one trailer."""
    records = []
    trailer = None
    for raw in lines:
        raw = raw.strip()
        if not raw:
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProfilerParseError(f"bad profile record: {raw[:120]!r}") from exc
        kind = obj.get("type")
        if kind == "line":
            records.append(LineRecord(
                file=obj["file"],
                line=int(obj["line"]),
                cpu_percent=float(obj["cpu_percent"]),
                alloc_count=int(obj["alloc_count"]),
                peak_mem_bytes=obj.get("peak_mem_bytes"),
            ))
        elif kind == "trailer":
            trailer = obj
        elif kind == "result":
            continue  # shim's execution record; the executor side owns it
        else:
            raise ProfilerParseError(f"unknown record type {kind!r}")
    if trailer is None:
        raise ProfilerParseError("profile stream has no trailer record")
    return RawProfile(
        lines=records,
        total_profiled_s=float(trailer["total_profiled_s"]),
        repetitions=int(trailer["repetitions"]),
    )


class ShimProfiler:
    """Runs the external measurement shim in a subprocess.

    The shim is invoked as `<cmd> profile <candidate-file> <harness-file>`
    and must emit the line/trailer wire protocol on stdout.
    """

    def __init__(self, shim_cmd: Optional[list[str]] = None, timeout_s: float = 120.0):
        self.shim_cmd = shim_cmd or [sys.executable, "-m", "runshim"]
        self.timeout_s = timeout_s

    def profile(self, task: Task, candidate: Candidate) -> RawProfile:
        with tempfile.TemporaryDirectory(prefix="pairopt-prof-") as workdir:
            cand_path = Path(workdir) / "candidate.py"
            harness_path = Path(workdir) / "harness.json"
            cand_path.write_text(candidate.source, "utf-8")
            harness_path.write_text(json.dumps({
                "entry_point": task.entry_point,
                "benchmark_kind": task.benchmark_kind.value,
                "cases": task.harness_spec["cases"],
            }), "utf-8")
            start = time.perf_counter()
            try:
                proc = subprocess.run(
                    self.shim_cmd + ["profile", str(cand_path), str(harness_path)],
                    capture_output=True,
                    text=True,
                    timeout=self.timeout_s,
                )
            except subprocess.TimeoutExpired as exc:
                elapsed = time.perf_counter() - start
                raise ProfilingTimeout(
                    f"profiling killed after {elapsed:.1f}s (limit {self.timeout_s}s)"
                ) from exc
            if proc.returncode != 0:
                raise ProfilerParseError(
                    f"shim exited {proc.returncode}: {proc.stderr[-500:]}"
                )
            return parse_profile_stream(proc.stdout.splitlines())


class FakeProfiler:
    """Deterministic in-process backend for replayed runs and tests.

    Per-line CPU shares and allocation counts are synthesized from content
    hashes, so two runs over the same pool produce identical profiles.
    """

    def profile(self, task: Task, candidate: Candidate) -> RawProfile:
        mean = candidate.mean_elapsed
        if mean is None:
            raise ValueError("candidate has no measured elapsed")
        reps = max(1, math.ceil(MIN_PROFILED_S / mean))
        lines = candidate.source.splitlines()
        raw_shares = []
        for idx, text in enumerate(lines, start=1):
            if not text.strip():
                continue
            digest = hashlib.sha256(f"{task.task_id}|{idx}|{text}".encode("utf-8")).digest()
            share = int.from_bytes(digest[:4], "big") % 1000
            allocs = int.from_bytes(digest[4:8], "big") % 300
            raw_shares.append((idx, share, allocs))
        total = sum(s for _, s, _ in raw_shares) or 1
        records = [
            LineRecord(
                file="candidate.py",
                line=idx,
                cpu_percent=100.0 * share / total,
                alloc_count=allocs,
            )
            for idx, share, allocs in raw_shares
        ]
        return RawProfile(
            lines=records,
            total_profiled_s=max(MIN_PROFILED_S, reps * mean),
            repetitions=reps,
        )


def profile_candidate(task: Task, candidate: Candidate, backend=None) -> RawProfile:
    """Profile one measured candidate through the configured backend."""
    if candidate.mean_elapsed is None:
        raise ValueError("profile_candidate requires a measured elapsed")
    if backend is None:
        backend = ShimProfiler()
    return backend.profile(task, candidate)
