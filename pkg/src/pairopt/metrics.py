"""Efficiency and correctness scoring: Pass@1, speedup, DPS family, Beyond.

DPS places a solution's runtime inside a reference runtime distribution as
the cumulative weight of references that are slower or equal; DPS_norm is
the same with uniform weights; Beyond is the uniform percentile.  Incorrect
final solutions score 0 and drop out of speedup means.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import EmptyReferences, NoComparableTasks
from .model import Candidate, CandidatePool, Task


@dataclass
class ReferenceDistribution:
    """Per-task (runtime, weight) reference solutions."""

    entries: list[tuple[float, float]]

    def __post_init__(self):
        for runtime, weight in self.entries:
            if runtime <= 0:
                raise ValueError("reference runtimes must be > 0")
            if weight <= 0:
                raise ValueError("reference weights must be > 0")

    @property
    def runtimes(self) -> list[float]:
        return [r for r, _ in self.entries]


def final_solution(pool: CandidatePool) -> Optional[Candidate]:
    """The task's representative: its fastest correct candidate."""
    return pool.best_correct()


def pass_at_1(pools: list[CandidatePool]) -> float:
    """Percent of tasks whose final solution is correct."""
    if not pools:
        return 0.0
    correct = sum(1 for pool in pools if final_solution(pool) is not None)
    return 100.0 * correct / len(pools)


def speedup(baseline_mean_s: list[Optional[float]],
            method_mean_s: list[Optional[float]]) -> float:
    """mean(baseline) / mean(method) over tasks solved by both methods."""
    if len(baseline_mean_s) != len(method_mean_s):
        raise ValueError("per-task lists must be aligned")
    pairs = [
        (b, m)
        for b, m in zip(baseline_mean_s, method_mean_s)
        if b is not None and m is not None
    ]
    if not pairs:
        raise NoComparableTasks("no task has a correct solution under both methods")
    base = sum(b for b, _ in pairs) / len(pairs)
    meth = sum(m for _, m in pairs) / len(pairs)
    return base / meth


def dps(candidate_mean_s: Optional[float], refs: ReferenceDistribution,
        normalized: bool = False) -> float:
    """100 x cumulative weight of references slower than or equal to the candidate.

    Ties count the reference as slower-or-equal: matching a reference's
    runtime exactly is not penalized.  None (no correct solution) scores 0.
    """
    if not refs.entries:
        raise EmptyReferences("reference distribution is empty")
    if candidate_mean_s is None:
        return 0.0
    if normalized:
        slower = sum(1 for runtime, _ in refs.entries if runtime >= candidate_mean_s)
        return 100.0 * slower / len(refs.entries)
    total = sum(w for _, w in refs.entries)
    mass = sum(w for runtime, w in refs.entries if runtime >= candidate_mean_s)
    return 100.0 * mass / total


def beyond(candidate_mean_s: Optional[float], distribution: ReferenceDistribution) -> float:
    """Runtime percentile: share of the distribution slower than or equal."""
    if not distribution.entries:
        raise EmptyReferences("runtime distribution is empty")
    if candidate_mean_s is None:
        return 0.0
    slower = sum(1 for r in distribution.runtimes if r >= candidate_mean_s)
    return 100.0 * slower / len(distribution.entries)


@dataclass
class TaskReportRow:
    task_id: str
    final_candidate_id: Optional[int]
    correctness: str
    mean_elapsed_s: Optional[float]
    selection_shape: Optional[str]
    dps: Optional[float]
    dps_norm: Optional[float]
    beyond: Optional[float]


@dataclass
class RoundReport:
    round_index: int
    rows: list[TaskReportRow]
    pass_at_1: float
    mean_timing_s: Optional[float]
    dps: Optional[float]
    dps_norm: Optional[float]
    beyond: Optional[float]
    prompt_tokens: int
    completion_tokens: int

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "pass_at_1": self.pass_at_1,
            "mean_timing_s": self.mean_timing_s,
            "dps": self.dps,
            "dps_norm": self.dps_norm,
            "beyond": self.beyond,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "tasks": [vars(row) for row in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([
            "round_index", "task_id", "final_candidate_id", "correctness",
            "mean_elapsed_s", "selection_shape", "dps", "dps_norm", "beyond",
        ])
        for row in self.rows:
            writer.writerow([
                self.round_index, row.task_id, row.final_candidate_id,
                row.correctness, row.mean_elapsed_s, row.selection_shape,
                row.dps, row.dps_norm, row.beyond,
            ])
        return buf.getvalue()


def build_round_report(
    round_index: int,
    tasks: list[Task],
    pools: dict[str, CandidatePool],
    shapes: Optional[dict[str, Optional[str]]] = None,
    prompt_tokens: int = 0,
    completion_tokens: int = 0,
) -> RoundReport:
    """Snapshot per-task finals and aggregate them into one report."""
    rows: list[TaskReportRow] = []
    for task in tasks:
        pool = pools[task.task_id]
        final = final_solution(pool)
        mean = final.mean_elapsed if final is not None else None
        refs = (ReferenceDistribution(list(map(tuple, task.reference_runtimes)))
                if task.reference_runtimes else None)
        rows.append(TaskReportRow(
            task_id=task.task_id,
            final_candidate_id=final.candidate_id if final else None,
            correctness=final.correctness.value if final else "none",
            mean_elapsed_s=mean,
            selection_shape=(shapes or {}).get(task.task_id),
            dps=dps(mean, refs) if refs else None,
            dps_norm=dps(mean, refs, normalized=True) if refs else None,
            beyond=beyond(mean, refs) if refs else None,
        ))
    timings = [r.mean_elapsed_s for r in rows if r.mean_elapsed_s is not None]
    dps_vals = [r.dps for r in rows if r.dps is not None]
    dps_norm_vals = [r.dps_norm for r in rows if r.dps_norm is not None]
    beyond_vals = [r.beyond for r in rows if r.beyond is not None]
    return RoundReport(
        round_index=round_index,
        rows=rows,
        pass_at_1=pass_at_1([pools[t.task_id] for t in tasks]),
        mean_timing_s=sum(timings) / len(timings) if timings else None,
        dps=sum(dps_vals) / len(dps_vals) if dps_vals else None,
        dps_norm=sum(dps_norm_vals) / len(dps_norm_vals) if dps_norm_vals else None,
        beyond=sum(beyond_vals) / len(beyond_vals) if beyond_vals else None,
        prompt_tokens=prompt_tokens,
        completion_tokens=completion_tokens,
    )
