"""Prompt assembly from the per-benchmark templates, plus code extraction.

Every prompt covers exactly one task.  Which feedback channels get attached
(candidate B, profile summaries, failure feedback) is decided by the run
mode, and the bundle records the channels it carries so runs can be audited
after the fact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import ChannelMismatch, CodeExtractionFailed, TemplateError
from .model import BenchmarkKind, Correctness, RunMode, Task
from .pairing import RefinementInput, Shape
from .profiler import ContrastSignal, render_contrast, render_summary
from .providers import estimate_tokens


@dataclass
class PromptBundle:
    task_id: str
    text: str
    channels: list[str] = field(default_factory=list)

    @property
    def token_estimate(self) -> int:
        return estimate_tokens(self.text)


@dataclass
class RefinedProgram:
    source: str
    extraction_note: str


def build_generation_prompt(task: Task) -> PromptBundle:
    """Initial-generation prompt; benchmark tests are never embedded."""
    kind = BenchmarkKind(task.benchmark_kind)
    if kind is BenchmarkKind.ENAMEL:
        stub = task.code_stub or task.description
        text = (
            "Complete the following function.\n\n"
            f"{stub}\n\n"
            "Requirements:\n"
            "- Keep the required function signature (top-level, no class).\n"
            "- Return only a Python code block.\n"
        )
    elif kind is BenchmarkKind.MERCURY:
        if not task.code_stub:
            raise TemplateError(f"task {task.task_id}: mercury tasks need a code stub")
        text = (
            "Task:\n"
            f"{task.description}\n\n"
            "Code Stub:\n"
            f"{task.code_stub}\n\n"
            "Requirements:\n"
            f"- Provide class Solution with the required method `{task.entry_point}`.\n"
            "- Return only a Python code block.\n"
        )
    elif kind in (BenchmarkKind.EVALPERF, BenchmarkKind.CUSTOM):
        text = (
            f"{task.description}\n\n"
            "Requirements:\n"
            f"- Implement the top-level function named `{task.entry_point}` (no class wrapper).\n"
            "- Return only a Python code block.\n"
        )
    else:
        raise TemplateError(f"no generation template for kind {task.benchmark_kind!r}")
    return PromptBundle(task_id=task.task_id, text=text, channels=["task"])


def _requirements_block(task: Task) -> str:
    kind = BenchmarkKind(task.benchmark_kind)
    if kind is BenchmarkKind.MERCURY:
        entry = f"- Provide class Solution with the required method `{task.entry_point}`."
    else:
        entry = f"- Keep the top-level function named `{task.entry_point}`."
    return f"Requirements:\n{entry}\n- Return only a Python code block.\n"


def build_efficiency_prompt(
    task: Task,
    rinput: RefinementInput,
    contrast: Optional[ContrastSignal],
    mode: RunMode,
    amdahl_k: float = 10.0,
) -> PromptBundle:
    """Refinement prompt: Candidate A is the program being improved.

    In paired shapes A is the slower counterpart and B the efficient
    reference; in solo shapes A is the selected target on its own.
    """
    if mode is RunMode.BASELINE:
        raise ChannelMismatch("baseline mode emits no refinement prompts")
    paired = rinput.shape in (Shape.PAIRED, Shape.PAIRED_INCORRECT_FALLBACK)
    if contrast is not None and not (mode.uses_profiling and paired):
        raise ChannelMismatch("contrast supplied in a non-profiling or solo context")
    target = rinput.counterpart if paired else rinput.reference
    exemplar = rinput.reference if paired else None

    channels = ["task", "candidate_a"]
    guidance_parts = []
    if paired:
        guidance_parts.append(
            "Candidate B solves the same task and runs faster. Transfer its "
            "efficient design choices onto Candidate A without breaking correctness."
        )
    else:
        guidance_parts.append(
            "Rewrite Candidate A to be more efficient while keeping it correct."
        )
    if contrast is not None:
        guidance_parts.append(render_contrast(contrast, amdahl_k=amdahl_k))

    sections = [
        "Improve the following Python code with correctness as the top priority "
        "and efficiency as secondary.",
        "Guidance:\n" + "\n".join(guidance_parts),
        f"Task:\n{task.description}",
        f"Candidate A:\n{target.source}",
    ]
    if mode.uses_profiling and target.profile is not None:
        sections.append("Profile A:\n" + render_summary(target.profile))
        channels.append("profile_a")
    if exemplar is not None:
        sections.append(f"Candidate B:\n{exemplar.source}")
        channels.append("candidate_b")
        if mode.uses_profiling and exemplar.profile is not None:
            sections.append("Profile B:\n" + render_summary(exemplar.profile))
            channels.append("profile_b")
    if target.correctness is not Correctness.CORRECT and target.failure is not None:
        failure = target.failure
        lines = [f"Execution feedback ({failure.kind.value}):"]
        if failure.error_type:
            lines.append(f"error type: {failure.error_type}")
        if failure.mismatch:
            inp, expected, actual = failure.mismatch
            lines.append(f"input: {inp!r}")
            lines.append(f"expected: {expected!r}")
            lines.append(f"actual: {actual!r}")
        if failure.stderr_tail:
            lines.append(f"stderr tail:\n{failure.stderr_tail}")
        sections.append("\n".join(lines))
        channels.append("failure")
    sections.append(_requirements_block(task))
    return PromptBundle(task_id=task.task_id, text="\n\n".join(sections), channels=channels)


_FENCE_RE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)


def extract_code(response: str) -> RefinedProgram:
    """Take the last fenced code block; models put the final answer last."""
    blocks = _FENCE_RE.findall(response)
    blocks = [(tag, body) for tag, body in blocks if body.strip()]
    if not blocks:
        raise CodeExtractionFailed("response contains no fenced code block")
    tag, body = blocks[-1]
    note = f"block {len(blocks)} of {len(blocks)}" + (f" (lang={tag})" if tag else "")
    return RefinedProgram(source=body.strip("\n") + "\n", extraction_note=note)
