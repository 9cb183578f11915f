"""Round-input selection: the reference/counterpart pair or its fallbacks.

The ladder, in order: (1) best correct reference paired with the slowest
sufficiently-similar correct counterpart; (2) reference paired with the
closest incorrect candidate when no correct counterpart clears the
threshold; (3) solo refinement of the reference; (4) solo refinement of the
fastest measured entry when nothing correct exists yet.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .errors import EmptyPool
from .model import Candidate, CandidatePool, Correctness, RunConfig
from .similarity import SimilarityConfig, similarity


class Shape(str, Enum):
    PAIRED = "paired"
    PAIRED_INCORRECT_FALLBACK = "paired_incorrect_fallback"
    SOLO = "solo"


@dataclass
class RefinementInput:
    shape: Shape
    reference: Candidate
    counterpart: Optional[Candidate] = None
    neighborhood_size: int = 0
    similarity_value: Optional[float] = None


def _selectable(candidate: Candidate) -> bool:
    # error-state candidates carry no executable signal
    return candidate.correctness is not Correctness.ERROR


def select_reference(pool: CandidatePool) -> Optional[Candidate]:
    """The most efficient correct candidate, if any."""
    return pool.best_correct()


def select_counterpart(pool: CandidatePool, p_plus: Candidate,
                       cfg: SimilarityConfig) -> Optional[Candidate]:
    """Slowest correct candidate with similarity >= tau to the reference.

    Ties break toward the lowest candidate_id; unfeaturized correct
    candidates are skipped.
    """
    best = None
    for q in pool.correct_entries():
        if q.candidate_id == p_plus.candidate_id:
            continue
        if not q.is_featurized or q.mean_elapsed is None:
            continue
        if similarity(p_plus, q, cfg) < cfg.tau:
            continue
        if best is None or q.mean_elapsed > best.mean_elapsed:
            best = q
    return best


def _neighborhood_size(pool: CandidatePool, p_plus: Candidate,
                       cfg: SimilarityConfig) -> int:
    """Count of eligible correct counterparts (reference excluded)."""
    count = 0
    for q in pool.correct_entries():
        if q.candidate_id == p_plus.candidate_id or not q.is_featurized:
            continue
        if similarity(p_plus, q, cfg) >= cfg.tau:
            count += 1
    return count


def _closest_incorrect(pool: CandidatePool, p_plus: Candidate,
                       cfg: SimilarityConfig) -> Optional[Candidate]:
    best, best_sim = None, -1.0
    for q in pool.entries:
        if q.correctness is not Correctness.INCORRECT or not q.is_featurized:
            continue
        sim = similarity(p_plus, q, cfg)
        if sim > best_sim:
            best, best_sim = q, sim
    if best is None:
        return None
    return best


def select_round_input(pool: CandidatePool, cfg: RunConfig) -> Optional[RefinementInput]:
    """Apply the fallback ladder; None only under strict pairing.

    With strict_pairing set, rounds that cannot form a correct/correct pair
    are skipped instead of falling back.
    """
    if len(pool) == 0:
        raise EmptyPool(f"pool for task {pool.task_id} is empty")
    sim_cfg = SimilarityConfig(alpha=cfg.alpha, tau=cfg.tau)
    p_plus = select_reference(pool)
    if p_plus is not None:
        counterpart = select_counterpart(pool, p_plus, sim_cfg)
        if counterpart is not None:
            return RefinementInput(
                shape=Shape.PAIRED,
                reference=p_plus,
                counterpart=counterpart,
                neighborhood_size=_neighborhood_size(pool, p_plus, sim_cfg),
                similarity_value=similarity(p_plus, counterpart, sim_cfg),
            )
        if cfg.strict_pairing:
            return None
        incorrect = _closest_incorrect(pool, p_plus, sim_cfg)
        if incorrect is not None:
            return RefinementInput(
                shape=Shape.PAIRED_INCORRECT_FALLBACK,
                reference=p_plus,
                counterpart=incorrect,
                neighborhood_size=0,
                similarity_value=similarity(p_plus, incorrect, sim_cfg),
            )
        return RefinementInput(shape=Shape.SOLO, reference=p_plus)
    if cfg.strict_pairing:
        return None
    fastest = pool.fastest_any()
    if fastest is None or not _selectable(fastest):
        # nothing measured yet: fall back to any non-error entry for exploration
        selectable = [c for c in pool.entries if _selectable(c)]
        if not selectable:
            return None
        fastest = selectable[0]
    return RefinementInput(shape=Shape.SOLO, reference=fastest)
