"""Task, candidate, and pool data model shared by all pipeline stages.

The pool enforces the two retention rules: candidates are never removed once
inserted, and structurally identical candidates (AST cosine 1.00) are
rejected as duplicates.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional

from . import similarity as _sim
from .errors import ParseError

if TYPE_CHECKING:
    from .executor import ElapsedStats, FailureSignal
    from .profiler import ProfileSummary
    from .similarity import AstFeatureVector, EmbeddingVector


class BenchmarkKind(str, Enum):
    EVALPERF = "evalperf"
    MERCURY = "mercury"
    ENAMEL = "enamel"
    CUSTOM = "custom"


class Correctness(str, Enum):
    UNKNOWN = "unknown"
    CORRECT = "correct"
    INCORRECT = "incorrect"
    ERROR = "error"


class Origin(str, Enum):
    GENERATION = "generation"
    REFINEMENT_PAIRED = "refinement_paired"
    REFINEMENT_SOLO = "refinement_solo"


class RunMode(str, Enum):
    BASELINE = "baseline"
    PAIRED_NO_PROFILING = "paired_no_profiling"
    SOLO_SUMMARY = "solo_summary"
    EFFIPAIR = "effipair"

    @property
    def uses_pairing(self) -> bool:
        return self in (RunMode.PAIRED_NO_PROFILING, RunMode.EFFIPAIR)

    @property
    def uses_profiling(self) -> bool:
        return self in (RunMode.SOLO_SUMMARY, RunMode.EFFIPAIR)


@dataclass
class Task:
    """One benchmark problem: description, correctness checks, entry point."""

    task_id: str
    description: str
    entry_point: str
    harness_spec: dict
    benchmark_kind: BenchmarkKind = BenchmarkKind.CUSTOM
    reference_runtimes: Optional[list[tuple[float, float]]] = None
    code_stub: Optional[str] = None

    def __post_init__(self):
        if not self.entry_point:
            raise ValueError("entry_point must be non-empty")
        if self.reference_runtimes:
            for runtime, weight in self.reference_runtimes:
                if weight <= 0:
                    raise ValueError("reference weights must be positive")


@dataclass
class TestOutcome:
    index: int
    passed: bool
    mismatch: Optional[tuple] = None  # (input, expected, actual)

    def __post_init__(self):
        if self.passed and self.mismatch is not None:
            raise ValueError("a passing outcome carries no mismatch")


@dataclass
class Candidate:
    """One generated program plus everything measured about it.

    `source` is immutable after pool insertion; measurement fields are filled
    in by the executor / profiler / similarity stages.
    """

    source: str
    round_created: int
    origin: Origin
    parent_ids: list[int] = field(default_factory=list)
    candidate_id: int = -1  # assigned by the pool on insert
    correctness: Correctness = Correctness.UNKNOWN
    elapsed: Optional["ElapsedStats"] = None
    profile: Optional["ProfileSummary"] = None
    failure: Optional["FailureSignal"] = None
    ast_vector: Optional["AstFeatureVector"] = None
    embedding: Optional["EmbeddingVector"] = None

    @property
    def mean_elapsed(self) -> Optional[float]:
        if self.elapsed is None:
            return None
        return self.elapsed.mean_s

    @property
    def is_featurized(self) -> bool:
        return self.ast_vector is not None and self.embedding is not None


class InsertResult(str, Enum):
    INSERTED = "inserted"
    REJECTED_DUPLICATE = "rejected_duplicate"


@dataclass
class RunConfig:
    n_initial: int = 3
    t_rounds: int = 3
    alpha: float = 0.8
    tau: float = 0.85
    workers: int = 16
    base_seed: int = 1
    correctness_timeout_s: float = 30.0
    profiling_timeout_s: float = 120.0
    timing_runs: int = 3
    mode: RunMode = RunMode.EFFIPAIR
    strict_pairing: bool = False
    amdahl_k: float = 10.0

    def __post_init__(self):
        if self.n_initial < 1:
            raise ValueError("n_initial must be >= 1")
        if self.t_rounds < 0:
            raise ValueError("t_rounds must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must be in [0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


class CandidatePool:
    """Per-task persistent candidate set with dedup and retention.

    Mutation is serialized per pool; candidates themselves are treated as
    immutable records once inserted.
    """

    def __init__(self, task_id: str):
        self.task_id = task_id
        self.entries: list[Candidate] = []
        self.best_correct_id: Optional[int] = None
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    def insert(self, candidate: Candidate) -> InsertResult:
        """Append a candidate unless it AST-duplicates an existing entry.

        Unparseable sources skip dedup and are retained with
        correctness = error, so provenance and token accounting stay intact.
        """
        with self._lock:
            if candidate.ast_vector is None:
                try:
                    candidate.ast_vector = _sim.ast_features(candidate.source)
                except ParseError:
                    candidate.correctness = Correctness.ERROR
            if candidate.ast_vector is not None:
                for entry in self.entries:
                    if entry.ast_vector is None:
                        continue
                    if _sim.ast_cosine(entry.ast_vector, candidate.ast_vector) >= 1.0 - 1e-9:
                        return InsertResult.REJECTED_DUPLICATE
            candidate.candidate_id = len(self.entries)
            self.entries.append(candidate)
            self._refresh_best_correct()
            return InsertResult.INSERTED

    def get(self, candidate_id: int) -> Candidate:
        return self.entries[candidate_id]

    def mark_evaluated(self, candidate: Candidate) -> None:
        """Recompute the best-correct cache after a verdict lands."""
        with self._lock:
            self._refresh_best_correct()

    def _refresh_best_correct(self) -> None:
        best = None
        for entry in self.entries:
            if entry.correctness is not Correctness.CORRECT:
                continue
            if entry.mean_elapsed is None:
                continue
            if best is None or entry.mean_elapsed < best.mean_elapsed:
                best = entry
        self.best_correct_id = best.candidate_id if best is not None else None

    def best_correct(self) -> Optional[Candidate]:
        """Correct entry with minimum mean elapsed; ties go to the lowest id."""
        if self.best_correct_id is None:
            return None
        return self.entries[self.best_correct_id]

    def fastest_any(self) -> Optional[Candidate]:
        """Minimum mean elapsed over all measured entries, any correctness."""
        best = None
        for entry in self.entries:
            if entry.mean_elapsed is None:
                continue
            if best is None or entry.mean_elapsed < best.mean_elapsed:
                best = entry
        return best

    def correct_entries(self) -> list[Candidate]:
        return [e for e in self.entries if e.correctness is Correctness.CORRECT]
