"""Evaluation dataset loaders and inference prompt rendering.

Three dataset shapes are supported, all as UTF-8 JSONL (one object per line):

  SO question answering: {"id", "title", "body", "answer"}
  code summarization:    {"code", "summary"}
  code generation:       {"task_id", "prompt", "tests", "entry_point"}

Records containing the placeholder token ``BIGBLOCK`` (which marks removed
code blocks or images in the SO dump) are excluded from the QA set.
Malformed records are skipped and counted, never fatal, except for
duplicate codegen task ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

BIGBLOCK_TOKEN = "BIGBLOCK"

DEFAULT_MAX_PROMPT_TOKENS = 512

PROMPT_HEADER = (
    "Below is an instruction that describes a task. "
    "Write a response that appropriately completes the request."
)


class CorpusError(Exception):
    """Fatal corpus problem: unreadable file, duplicate id, bad arguments."""


@dataclass(frozen=True)
class SoQuestion:
    id: str
    title: str
    body: str
    answer: str


@dataclass(frozen=True)
class SummarizationPair:
    code: str
    summary: str


@dataclass(frozen=True)
class CodegenTask:
    task_id: str
    prompt: str
    tests: str
    entry_point: str


@dataclass(frozen=True)
class InferencePrompt:
    rendered: str
    source_id: str


@dataclass
class ExclusionReport:
    """Per-reason counts of records dropped during a load."""

    excluded_by_reason: dict[str, int] = field(default_factory=dict)

    def count(self, reason: str) -> None:
        self.excluded_by_reason[reason] = self.excluded_by_reason.get(reason, 0) + 1

    @property
    def total_excluded(self) -> int:
        return sum(self.excluded_by_reason.values())


def count_tokens(text: str) -> int:
    """Whitespace-token count used for prompt length clamping."""
    return len(text.split())


def _iter_jsonl(path: str | Path):
    p = Path(path)
    try:
        raw = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {p}: {exc}") from exc
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            yield lineno, None
            continue
        yield lineno, obj if isinstance(obj, dict) else None


def _contains_bigblock(*fields_: str) -> bool:
    return any(BIGBLOCK_TOKEN in f for f in fields_)


def load_so_questions(path: str | Path) -> tuple[list[SoQuestion], ExclusionReport]:
    """Load SO QA records, excluding any whose text contains BIGBLOCK."""
    report = ExclusionReport()
    out: list[SoQuestion] = []
    for _, obj in _iter_jsonl(path):
        if obj is None:
            report.count("malformed")
            continue
        try:
            rec = SoQuestion(
                id=str(obj["id"]),
                title=str(obj["title"]),
                body=str(obj["body"]),
                answer=str(obj["answer"]),
            )
        except KeyError:
            report.count("missing_field")
            continue
        if not rec.title.strip() or not rec.body.strip():
            report.count("empty_field")
            continue
        if _contains_bigblock(rec.title, rec.body, rec.answer):
            report.count("bigblock")
            continue
        out.append(rec)
    return out, report


def load_code_summaries(
    path: str | Path, limit: int
) -> tuple[list[SummarizationPair], ExclusionReport]:
    """Load the first `limit` valid code/summary pairs in file order."""
    if limit < 0:
        raise CorpusError("limit must be >= 0")
    report = ExclusionReport()
    out: list[SummarizationPair] = []
    if limit == 0:
        return out, report
    for _, obj in _iter_jsonl(path):
        if len(out) >= limit:
            break
        if obj is None:
            report.count("malformed")
            continue
        try:
            rec = SummarizationPair(code=str(obj["code"]), summary=str(obj["summary"]))
        except KeyError:
            report.count("missing_field")
            continue
        if not rec.code.strip() or not rec.summary.strip():
            report.count("empty_field")
            continue
        out.append(rec)
    return out, report


def load_codegen_tasks(path: str | Path) -> tuple[list[CodegenTask], ExclusionReport]:
    """Load codegen tasks; duplicate task ids are a fatal error."""
    report = ExclusionReport()
    out: list[CodegenTask] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        if obj is None:
            report.count("malformed")
            continue
        try:
            rec = CodegenTask(
                task_id=str(obj["task_id"]),
                prompt=str(obj["prompt"]),
                tests=str(obj["tests"]),
                entry_point=str(obj["entry_point"]),
            )
        except KeyError:
            report.count("missing_field")
            continue
        if not rec.tests.strip():
            report.count("empty_field")
            continue
        if rec.task_id in seen:
            raise CorpusError(f"duplicate task_id {rec.task_id!r} at line {lineno}")
        seen.add(rec.task_id)
        out.append(rec)
    return out, report


def render_prompt(
    instruction: str,
    input_text: str = "",
    source_id: str = "",
    max_tokens: int = DEFAULT_MAX_PROMPT_TOKENS,
) -> InferencePrompt:
    """Render the three-section inference template, clamping the input field.

    The input (never the instruction) is truncated from the right so that the
    rendered prompt stays within `max_tokens` whitespace tokens.
    """
    if not instruction.strip():
        raise CorpusError("instruction must be non-empty")

    def render(inp: str) -> str:
        parts = [PROMPT_HEADER, "", "### Instruction:", instruction]
        if inp:
            parts += ["", "### Input:", inp]
        parts += ["", "### Response:"]
        return "\n".join(parts)

    rendered = render(input_text)
    if count_tokens(rendered) > max_tokens and input_text:
        fixed = count_tokens(render(""))
        budget = max(0, max_tokens - fixed - 2)  # 2 tokens for the Input header
        clipped = " ".join(input_text.split()[:budget])
        rendered = render(clipped) if clipped else render("")
    return InferencePrompt(rendered=rendered, source_id=source_id)
