"""Shared fixtures: the 5-task mini-suite and its deterministic provider.

The scripted provider answers generation prompts with one of three
structurally similar variants (selected by the per-sample seed offset) and
refinement prompts with progressively better rewrites (selected by the
round encoded in the seed).  Everything is a pure function of the prompt
and seed, so recorded transcripts replay bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

from pairopt.model import BenchmarkKind, Task

DATA_DIR = Path(__file__).parent / "data"
TASKS_PATH = DATA_DIR / "mini_suite.json"
TRANSCRIPT_DIR = DATA_DIR / "transcripts"
GOLDEN_REPORT_PATH = DATA_DIR / "golden_report.json"


def _dedent(text: str) -> str:
    return text.strip("\n") + "\n"


MINI_SUITE: list[dict] = [
    {
        "task_id": "t01_sum_squares",
        "description": "Compute the sum of squares of the integers 0..n-1.",
        "entry_point": "sum_squares",
        "harness_spec": {"cases": [
            {"input": [10], "expected": 285},
            {"input": [100], "expected": 328350},
            {"input": [0], "expected": 0},
        ]},
        "reference_runtimes": [[0.05, 1.0], [0.15, 1.0], [0.3, 1.0], [0.6, 1.0]],
        "gen": [
            _dedent("""
def sum_squares(n):
    total = 0
    for i in range(n):
        total += i * i
    return total
"""),
            _dedent("""
def sum_squares(n):
    total = 0
    for i in range(n):
        sq = i * i
        total += sq
    return total
"""),
            _dedent("""
def sum_squares(n):
    total = 0
    i = 0
    while i < n:
        total += i * i
        i += 1
    return total
"""),
        ],
        "refined": [
            _dedent("""
def sum_squares(n):
    return sum(i * i for i in range(n))
"""),
            _dedent("""
def sum_squares(n):
    return sum([i * i for i in range(n)])
"""),
            _dedent("""
def sum_squares(n):
    if n <= 0:
        return 0
    m = n - 1
    return m * (m + 1) * (2 * m + 1) // 6
"""),
        ],
    },
    {
        "task_id": "t02_reverse_words",
        "description": "Return the words of the input string in reverse order, joined by single spaces.",
        "entry_point": "reverse_words",
        "harness_spec": {"cases": [
            {"input": ["the quick brown fox"], "expected": "fox brown quick the"},
            {"input": ["hello"], "expected": "hello"},
            {"input": ["a b c d e"], "expected": "e d c b a"},
        ]},
        "reference_runtimes": [[0.04, 1.0], [0.12, 1.0], [0.25, 1.0], [0.5, 1.0]],
        "gen": [
            _dedent("""
def reverse_words(s):
    words = s.split()
    out = []
    for w in words:
        out.append(w)
    out.reverse()
    return " ".join(out)
"""),
            _dedent("""
def reverse_words(s):
    words = s.split()
    out = []
    for w in words:
        out.insert(0, w)
    return " ".join(out)
"""),
            _dedent("""
def reverse_words(s):
    words = s.split()
    out = []
    i = len(words) - 1
    while i >= 0:
        out.append(words[i])
        i -= 1
    return " ".join(out)
"""),
        ],
        "refined": [
            _dedent("""
def reverse_words(s):
    return " ".join(s.split()[::-1])
"""),
            _dedent("""
def reverse_words(s):
    return " ".join(reversed(s.split()))
"""),
            _dedent("""
def reverse_words(s):
    parts = s.split()
    parts.reverse()
    return " ".join(parts)
"""),
        ],
    },
    {
        "task_id": "t03_count_evens",
        "description": "Count how many integers in the input list are even.",
        "entry_point": "count_evens",
        "harness_spec": {"cases": [
            {"input": [[1, 2, 3, 4, 5, 6]], "expected": 3},
            {"input": [[]], "expected": 0},
            {"input": [[2, 4, 8]], "expected": 3},
        ]},
        "reference_runtimes": [[0.03, 1.0], [0.1, 1.0], [0.2, 1.0], [0.4, 1.0]],
        "gen": [
            _dedent("""
def count_evens(xs):
    count = 0
    for x in xs:
        if x % 2 == 0:
            count += 1
    return count
"""),
            _dedent("""
def count_evens(xs):
    count = 0
    for x in xs:
        r = x % 2
        if r == 0:
            count += 1
    return count
"""),
            # counts odds, deliberately incorrect
            _dedent("""
def count_evens(xs):
    count = 0
    for x in xs:
        if x % 2 != 0:
            count += 1
    return count
"""),
        ],
        "refined": [
            _dedent("""
def count_evens(xs):
    return sum(1 for x in xs if x % 2 == 0)
"""),
            _dedent("""
def count_evens(xs):
    return len([x for x in xs if x % 2 == 0])
"""),
            _dedent("""
def count_evens(xs):
    return sum(x % 2 == 0 for x in xs)
"""),
        ],
    },
    {
        "task_id": "t04_fib",
        "description": "Return the n-th Fibonacci number, with fib(0) = 0 and fib(1) = 1.",
        "entry_point": "fib",
        "harness_spec": {"cases": [
            {"input": [0], "expected": 0},
            {"input": [1], "expected": 1},
            {"input": [10], "expected": 55},
            {"input": [20], "expected": 6765},
        ]},
        "reference_runtimes": [[0.06, 1.0], [0.18, 1.0], [0.35, 1.0], [0.7, 1.0]],
        "gen": [
            _dedent("""
def fib(n):
    a = 0
    b = 1
    for _ in range(n):
        a, b = b, a + b
    return a
"""),
            _dedent("""
def fib(n):
    a = 0
    b = 1
    for _ in range(n):
        nxt = a + b
        a = b
        b = nxt
    return a
"""),
            _dedent("""
def fib(n):
    a = 0
    b = 1
    i = 0
    while i < n:
        a, b = b, a + b
        i += 1
    return a
"""),
        ],
        "refined": [
            _dedent("""
def fib(n):
    if n < 2:
        return n
    a, b = 0, 1
    for _ in range(n - 1):
        a, b = b, a + b
    return b
"""),
            _dedent("""
def fib(n):
    a, b = 0, 1
    for _ in range(n):
        b, a = a + b, b
    return a
"""),
            _dedent("""
def fib(n):
    pair = (0, 1)
    for _ in range(n):
        pair = (pair[1], pair[0] + pair[1])
    return pair[0]
"""),
        ],
    },
    {
        "task_id": "t05_running_max",
        "description": "Return the list of prefix maxima of the input list.",
        "entry_point": "running_max",
        "harness_spec": {"cases": [
            {"input": [[3, 1, 4, 1, 5]], "expected": [3, 3, 4, 4, 5]},
            {"input": [[]], "expected": []},
            {"input": [[2, 2, 2]], "expected": [2, 2, 2]},
        ]},
        "reference_runtimes": [[0.02, 1.0], [0.08, 1.0], [0.16, 1.0], [0.32, 1.0]],
        "gen": [
            _dedent("""
def running_max(xs):
    out = []
    for i in range(len(xs)):
        best = xs[0]
        for j in range(i + 1):
            if xs[j] > best:
                best = xs[j]
        out.append(best)
    return out
"""),
            _dedent("""
def running_max(xs):
    out = []
    best = None
    for x in xs:
        if best is None or x > best:
            best = x
        out.append(best)
    return out
"""),
            _dedent("""
def running_max(xs):
    out = []
    best = None
    for x in xs:
        if best is None:
            best = x
        elif x > best:
            best = x
        out.append(best)
    return out
"""),
        ],
        # identical refinements: rounds 2 and 3 exercise dedup rejection
        "refined": [
            _dedent("""
def running_max(xs):
    import itertools
    return list(itertools.accumulate(xs, max))
"""),
            _dedent("""
def running_max(xs):
    import itertools
    return list(itertools.accumulate(xs, max))
"""),
            _dedent("""
def running_max(xs):
    import itertools
    return list(itertools.accumulate(xs, max))
"""),
        ],
    },
]


def write_task_file(path: Path = TASKS_PATH) -> Path:
    """Materialize the mini-suite as the documented JSON task schema."""
    entries = []
    for spec in MINI_SUITE:
        entries.append({
            "task_id": spec["task_id"],
            "description": spec["description"],
            "entry_point": spec["entry_point"],
            "benchmark_kind": "evalperf",
            "harness_spec": spec["harness_spec"],
            "reference_runtimes": spec["reference_runtimes"],
        })
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(entries, indent=2, sort_keys=True), "utf-8")
    return path


def mini_tasks() -> list[Task]:
    return [
        Task(
            task_id=spec["task_id"],
            description=spec["description"],
            entry_point=spec["entry_point"],
            harness_spec=spec["harness_spec"],
            benchmark_kind=BenchmarkKind.EVALPERF,
            reference_runtimes=[tuple(r) for r in spec["reference_runtimes"]],
        )
        for spec in MINI_SUITE
    ]


def regenerate_fixtures() -> None:
    """Rebuild the committed task file, transcripts, and golden report.

    Run as `python3 -c "import support; support.regenerate_fixtures()"` from
    the tests directory after editing the mini-suite.
    """
    import shutil
    import tempfile

    from pairopt.cli import run_pipeline
    from pairopt.executor import InProcessExecutor
    from pairopt.model import CandidatePool, RunConfig, RunMode
    from pairopt.profiler import FakeProfiler
    from pairopt.providers import RecordingProvider, ScriptedProvider
    from pairopt.refinement import Dependencies
    from pairopt.similarity import HashedNgramEmbedder

    write_task_file()
    TRANSCRIPT_DIR.mkdir(parents=True, exist_ok=True)
    for mode in RunMode:
        deps = Dependencies(
            provider=RecordingProvider(ScriptedProvider(MiniSuiteScript())),
            embedder=HashedNgramEmbedder(),
            executor=InProcessExecutor(),
            profiler=FakeProfiler(),
        )
        cfg = RunConfig(mode=mode, n_initial=3, t_rounds=3, base_seed=1)
        workdir = Path(tempfile.mkdtemp(prefix="pairopt-fixtures-"))
        try:
            run_pipeline(mini_tasks(), cfg, deps, workdir / "run",
                         deterministic=True)
            deps.provider.save(TRANSCRIPT_DIR / f"{mode.value}.jsonl")
            if mode is RunMode.EFFIPAIR:
                shutil.copyfile(workdir / "run" / "rounds" / "round_3" / "report.json",
                                GOLDEN_REPORT_PATH)
        finally:
            shutil.rmtree(workdir, ignore_errors=True)


class MiniSuiteScript:
    """Deterministic (prompt, seed) -> response function for the mini-suite."""

    def __call__(self, prompt: str, seed: int) -> str:
        spec = self._match_task(prompt)
        if prompt.startswith("Improve the following"):
            round_index = seed // 1000
            variants = spec["refined"]
            code = variants[min(round_index, len(variants)) - 1]
        else:
            sample = seed % 10
            code = spec["gen"][sample % len(spec["gen"])]
        return f"Here is my solution.\n\n```python\n{code}```\n"

    @staticmethod
    def _match_task(prompt: str) -> dict:
        for spec in MINI_SUITE:
            if spec["description"] in prompt or spec["entry_point"] in prompt:
                return spec
        raise AssertionError("prompt does not mention any mini-suite task")
