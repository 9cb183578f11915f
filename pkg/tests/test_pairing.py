import random

import pytest

from pairopt.errors import EmptyPool
from pairopt.executor import ElapsedStats
from pairopt.model import Candidate, CandidatePool, Correctness, Origin, RunConfig
from pairopt.pairing import (
    RefinementInput,
    Shape,
    select_counterpart,
    select_reference,
    select_round_input,
)
from pairopt.similarity import HashedNgramEmbedder, SimilarityConfig, embed, similarity

EMBEDDER = HashedNgramEmbedder()


def make_candidate(source, correctness, elapsed=None):
    cand = Candidate(source=source, round_created=0, origin=Origin.GENERATION)
    cand.correctness = correctness
    if elapsed is not None:
        cand.elapsed = ElapsedStats(runs=[elapsed])
    cand.embedding = embed(source, EMBEDDER)
    return cand


def variant_source(i, style):
    """A family of similar loops plus a structurally distant variant."""
    if style == "near":
        body = "\n".join(f"        total += x * {j + 2}" for j in range(i % 3 + 1))
        return f"def f(xs):\n    total = 0\n    for x in xs:\n{body}\n    return total\n"
    return f"def f(xs):\n    return [x ** {i + 2} for x in xs if x > {i}]\n"


def build_pool(entries):
    pool = CandidatePool("t")
    for cand in entries:
        pool.insert(cand)
    return pool


def cfg(tau=0.85, strict=False):
    return RunConfig(tau=tau, strict_pairing=strict)


class TestLadder:
    def test_rung1_paired_correct(self):
        fast = make_candidate(variant_source(0, "near"), Correctness.CORRECT, 0.1)
        slow = make_candidate(variant_source(1, "near"), Correctness.CORRECT, 0.5)
        pool = build_pool([fast, slow])
        got = select_round_input(pool, cfg())
        assert got.shape is Shape.PAIRED
        assert got.reference is fast and got.counterpart is slow
        assert got.similarity_value >= 0.85
        assert got.neighborhood_size == 1

    def test_rung2_incorrect_fallback_ignores_tau(self):
        ref = make_candidate(variant_source(0, "near"), Correctness.CORRECT, 0.1)
        far_bad = make_candidate(variant_source(3, "far"), Correctness.INCORRECT, 0.2)
        pool = build_pool([ref, far_bad])
        sim = similarity(ref, far_bad, SimilarityConfig())
        assert sim < 0.85  # the fallback must still pick it
        got = select_round_input(pool, cfg())
        assert got.shape is Shape.PAIRED_INCORRECT_FALLBACK
        assert got.counterpart is far_bad

    def test_rung3_solo_on_reference(self):
        ref = make_candidate(variant_source(0, "near"), Correctness.CORRECT, 0.1)
        pool = build_pool([ref])
        got = select_round_input(pool, cfg())
        assert got.shape is Shape.SOLO
        assert got.reference is ref and got.counterpart is None

    def test_rung4_solo_on_fastest_measured(self):
        slow_bad = make_candidate(variant_source(0, "near"), Correctness.INCORRECT, 0.9)
        fast_bad = make_candidate(variant_source(5, "far"), Correctness.INCORRECT, 0.2)
        pool = build_pool([slow_bad, fast_bad])
        got = select_round_input(pool, cfg())
        assert got.shape is Shape.SOLO
        assert got.reference is fast_bad

    def test_empty_pool_raises(self):
        with pytest.raises(EmptyPool):
            select_round_input(CandidatePool("t"), cfg())

    def test_strict_pairing_skips_without_pair(self):
        ref = make_candidate(variant_source(0, "near"), Correctness.CORRECT, 0.1)
        pool = build_pool([ref])
        assert select_round_input(pool, cfg(strict=True)) is None

    def test_strict_pairing_still_pairs_when_possible(self):
        fast = make_candidate(variant_source(0, "near"), Correctness.CORRECT, 0.1)
        slow = make_candidate(variant_source(1, "near"), Correctness.CORRECT, 0.5)
        pool = build_pool([fast, slow])
        got = select_round_input(pool, cfg(strict=True))
        assert got is not None and got.shape is Shape.PAIRED


class TestCounterpartSelection:
    def test_slowest_eligible_wins(self):
        ref = make_candidate(variant_source(0, "near"), Correctness.CORRECT, 0.1)
        mid = make_candidate(variant_source(1, "near"), Correctness.CORRECT, 0.3)
        slow = make_candidate(variant_source(2, "near"), Correctness.CORRECT, 0.6)
        pool = build_pool([ref, mid, slow])
        got = select_counterpart(pool, pool.best_correct(), SimilarityConfig())
        assert got is slow

    def test_dissimilar_correct_excluded(self):
        ref = make_candidate(variant_source(0, "near"), Correctness.CORRECT, 0.1)
        far = make_candidate(variant_source(7, "far"), Correctness.CORRECT, 0.9)
        pool = build_pool([ref, far])
        assert similarity(ref, far, SimilarityConfig()) < 0.85
        assert select_counterpart(pool, ref, SimilarityConfig()) is None

    def test_incorrect_never_selected_as_counterpart(self):
        ref = make_candidate(variant_source(0, "near"), Correctness.CORRECT, 0.1)
        bad = make_candidate(variant_source(1, "near"), Correctness.INCORRECT, 0.5)
        pool = build_pool([ref, bad])
        assert select_counterpart(pool, ref, SimilarityConfig()) is None


def random_pool(rng, size):
    entries = []
    for i in range(size):
        style = "near" if rng.random() < 0.7 else "far"
        verdict = rng.choice([Correctness.CORRECT, Correctness.INCORRECT])
        elapsed = round(rng.uniform(0.01, 1.0), 6)
        entries.append(make_candidate(variant_source(rng.randint(0, 9), style),
                                      verdict, elapsed))
    return build_pool(entries)


def oracle_round_input(pool, run_cfg):
    """Straight-line restatement of the ladder for cross-checking."""
    sim_cfg = SimilarityConfig(alpha=run_cfg.alpha, tau=run_cfg.tau)
    correct = [c for c in pool.entries
               if c.correctness is Correctness.CORRECT and c.mean_elapsed is not None]
    if correct:
        ref = min(correct, key=lambda c: (c.mean_elapsed, c.candidate_id))
        eligible = [c for c in correct
                    if c.candidate_id != ref.candidate_id
                    and similarity(ref, c, sim_cfg) >= run_cfg.tau]
        if eligible:
            counter = max(eligible, key=lambda c: (c.mean_elapsed, -c.candidate_id))
            return (Shape.PAIRED, ref.candidate_id, counter.candidate_id)
        if run_cfg.strict_pairing:
            return None
        incorrect = [c for c in pool.entries if c.correctness is Correctness.INCORRECT]
        if incorrect:
            counter = max(incorrect,
                          key=lambda c: (similarity(ref, c, sim_cfg), -c.candidate_id))
            return (Shape.PAIRED_INCORRECT_FALLBACK, ref.candidate_id,
                    counter.candidate_id)
        return (Shape.SOLO, ref.candidate_id, None)
    if run_cfg.strict_pairing:
        return None
    measured = [c for c in pool.entries if c.mean_elapsed is not None]
    ref = min(measured, key=lambda c: (c.mean_elapsed, c.candidate_id))
    return (Shape.SOLO, ref.candidate_id, None)


def as_triple(got):
    if got is None:
        return None
    counter = got.counterpart.candidate_id if got.counterpart is not None else None
    return (got.shape, got.reference.candidate_id, counter)


class TestOracle:
    def test_random_pools_match_bruteforce(self):
        rng = random.Random(29)
        for trial in range(200):
            pool = random_pool(rng, rng.randint(1, 8))
            strict = rng.random() < 0.3
            run_cfg = cfg(strict=strict)
            assert as_triple(select_round_input(pool, run_cfg)) == \
                oracle_round_input(pool, run_cfg), f"trial {trial}"

    def test_tau_monotonicity(self):
        """Raising tau can only shrink the eligible counterpart set."""
        rng = random.Random(31)
        taus = [0.5, 0.7, 0.85, 0.95]
        for _ in range(50):
            pool = random_pool(rng, 6)
            ref = select_reference(pool)
            if ref is None:
                continue
            sizes = []
            for tau in taus:
                sim_cfg = SimilarityConfig(tau=tau)
                eligible = [c for c in pool.correct_entries()
                            if c.candidate_id != ref.candidate_id
                            and c.mean_elapsed is not None
                            and similarity(ref, c, sim_cfg) >= tau]
                got = select_counterpart(pool, ref, sim_cfg)
                assert (got is None) == (not eligible)
                sizes.append(len(eligible))
            assert sizes == sorted(sizes, reverse=True)
