"""The round loop: generate, evaluate, pair, prompt, refine, reinsert.

Round 0 is the generation pass (N samples per task); each later round
selects one refinement input per task, calls the provider once, and feeds
the extracted program back into that task's pool.  A failure on one task
never aborts the round for the others.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from . import similarity as sim
from .errors import (
    CodeExtractionFailed,
    ParseError,
    ProfilerParseError,
    ProfilingTimeout,
    ProviderUnavailable,
)
from .executor import FailureKind, FailureSignal
from .model import Candidate, CandidatePool, Correctness, InsertResult, Origin, RunConfig, RunMode, Task
from .pairing import RefinementInput, Shape, select_round_input
from .profiler import contrast as build_contrast
from .profiler import profile_candidate, summarize
from .prompts import PromptBundle, build_efficiency_prompt, build_generation_prompt, extract_code
from .providers import ProviderCall


@dataclass
class Dependencies:
    """Everything a round needs: provider, embedder, executor, profiler."""

    provider: object
    embedder: object
    executor: object
    profiler: object


@dataclass
class TaskRoundStat:
    task_id: str
    action: str  # refined | generated | skipped | failed
    shape: Optional[str] = None
    reference_id: Optional[int] = None
    counterpart_id: Optional[int] = None
    similarity_value: Optional[float] = None
    neighborhood_size: Optional[int] = None
    insert_results: list[str] = field(default_factory=list)
    new_candidate_ids: list[int] = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class RoundOutcome:
    round_index: int
    stats: list[TaskRoundStat]
    calls: list[ProviderCall]
    prompts: list[PromptBundle]


def seed_for(base_seed: int, round_index: int, task_index: int, sample: int = 0) -> int:
    """Deterministic, injective seed map over (round, task, sample)."""
    return base_seed + 1000 * round_index + 10 * task_index + sample


def ingest(task: Task, pool: CandidatePool, source: str, origin: Origin,
           parent_ids: list[int], round_index: int, deps: Dependencies,
           cfg: RunConfig) -> tuple[InsertResult, Optional[Candidate]]:
    """Featurize, dedup-insert, evaluate, and (per mode) profile one program."""
    candidate = Candidate(
        source=source,
        round_created=round_index,
        origin=origin,
        parent_ids=list(parent_ids),
    )
    try:
        candidate.ast_vector = sim.ast_features(source)
    except ParseError as exc:
        candidate.correctness = Correctness.ERROR
        candidate.failure = FailureSignal(
            kind=FailureKind.EXCEPTION,
            error_type="SyntaxError",
            stderr_tail=str(exc),
        )
    candidate.embedding = sim.embed(source, deps.embedder)
    result = pool.insert(candidate)
    if result is InsertResult.REJECTED_DUPLICATE:
        return result, None
    if candidate.correctness is Correctness.ERROR:
        return result, candidate
    outcome = deps.executor.evaluate(task, source, cfg)
    candidate.correctness = outcome.verdict
    candidate.elapsed = outcome.stats
    candidate.failure = outcome.failure
    pool.mark_evaluated(candidate)
    if cfg.mode.uses_profiling and candidate.correctness is Correctness.CORRECT:
        try:
            raw = profile_candidate(task, candidate, backend=deps.profiler)
            candidate.profile = summarize(raw, source)
        except (ProfilingTimeout, ProfilerParseError):
            candidate.profile = None  # unprofiled candidates simply lack that channel
    return result, candidate


def generation_pass(tasks: list[Task], pools: dict[str, CandidatePool],
                    deps: Dependencies, cfg: RunConfig) -> RoundOutcome:
    """Round 0: sample n_initial candidates per task with per-sample seeds."""

    def one_task(args):
        task_index, task = args
        pool = pools[task.task_id]
        stat = TaskRoundStat(task_id=task.task_id, action="generated")
        calls: list[ProviderCall] = []
        prompts: list[PromptBundle] = []
        try:
            bundle = build_generation_prompt(task)
            prompts.append(bundle)
            for sample in range(cfg.n_initial):
                seed = seed_for(cfg.base_seed, 0, task_index, sample)
                reply = deps.provider.complete(bundle.text, seed)
                calls.append(ProviderCall(
                    provider_id=deps.provider.provider_id,
                    seed=seed,
                    prompt=bundle.text,
                    response=reply.text,
                    prompt_tokens=reply.prompt_tokens,
                    completion_tokens=reply.completion_tokens,
                ))
                try:
                    program = extract_code(reply.text)
                except CodeExtractionFailed as exc:
                    stat.insert_results.append(f"extraction_failed:{exc}")
                    continue
                result, candidate = ingest(
                    task, pool, program.source, Origin.GENERATION, [], 0, deps, cfg,
                )
                stat.insert_results.append(result.value)
                if candidate is not None:
                    stat.new_candidate_ids.append(candidate.candidate_id)
        except Exception as exc:  # isolate per-task failures
            stat.action = "failed"
            stat.error = f"{type(exc).__name__}: {exc}"
        return stat, calls, prompts

    return _run_tasks(0, tasks, one_task, cfg)


def run_round(tasks: list[Task], pools: dict[str, CandidatePool],
              deps: Dependencies, cfg: RunConfig, round_index: int) -> RoundOutcome:
    """One refinement round: one provider call per task, pool grows by <= 1."""
    if round_index < 1:
        raise ValueError("refinement rounds start at 1; round 0 is generation")

    def one_task(args):
        task_index, task = args
        pool = pools[task.task_id]
        stat = TaskRoundStat(task_id=task.task_id, action="refined")
        calls: list[ProviderCall] = []
        prompts: list[PromptBundle] = []
        try:
            rinput = _round_input_for_mode(pool, cfg)
            if rinput is None:
                stat.action = "skipped"
                return stat, calls, prompts
            stat.shape = rinput.shape.value
            stat.reference_id = rinput.reference.candidate_id
            stat.counterpart_id = (
                rinput.counterpart.candidate_id if rinput.counterpart else None
            )
            stat.similarity_value = rinput.similarity_value
            stat.neighborhood_size = rinput.neighborhood_size
            signal = None
            if (cfg.mode is RunMode.EFFIPAIR and rinput.shape is Shape.PAIRED
                    and rinput.reference.profile is not None
                    and rinput.counterpart.profile is not None):
                signal = build_contrast(rinput.reference, rinput.counterpart)
            bundle = build_efficiency_prompt(task, rinput, signal, cfg.mode,
                                             amdahl_k=cfg.amdahl_k)
            prompts.append(bundle)
            seed = seed_for(cfg.base_seed, round_index, task_index, 0)
            reply = deps.provider.complete(bundle.text, seed)
            calls.append(ProviderCall(
                provider_id=deps.provider.provider_id,
                seed=seed,
                prompt=bundle.text,
                response=reply.text,
                prompt_tokens=reply.prompt_tokens,
                completion_tokens=reply.completion_tokens,
            ))
            program = extract_code(reply.text)
            origin = (Origin.REFINEMENT_PAIRED
                      if rinput.counterpart is not None else Origin.REFINEMENT_SOLO)
            parents = [rinput.reference.candidate_id]
            if rinput.counterpart is not None:
                parents.append(rinput.counterpart.candidate_id)
            result, candidate = ingest(
                task, pool, program.source, origin, parents, round_index, deps, cfg,
            )
            stat.insert_results.append(result.value)
            if candidate is not None:
                stat.new_candidate_ids.append(candidate.candidate_id)
        except ProviderUnavailable:
            raise  # fatal: the whole round cannot proceed without a provider
        except Exception as exc:
            stat.action = "failed"
            stat.error = f"{type(exc).__name__}: {exc}"
        return stat, calls, prompts

    return _run_tasks(round_index, tasks, one_task, cfg)


def _round_input_for_mode(pool: CandidatePool, cfg: RunConfig) -> Optional[RefinementInput]:
    if cfg.mode is RunMode.SOLO_SUMMARY:
        # solo refinement never pairs: fastest correct entry, else fastest overall
        target = pool.best_correct() or pool.fastest_any()
        if target is None:
            return None
        return RefinementInput(shape=Shape.SOLO, reference=target)
    return select_round_input(pool, cfg)


def _run_tasks(round_index: int, tasks: list[Task], one_task, cfg: RunConfig) -> RoundOutcome:
    indexed = list(enumerate(tasks))
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(one_task, indexed))
    stats, calls, prompts = [], [], []
    for stat, task_calls, task_prompts in results:
        stats.append(stat)
        calls.extend(task_calls)
        prompts.extend(task_prompts)
    return RoundOutcome(round_index=round_index, stats=stats, calls=calls, prompts=prompts)
