"""Automatic evaluation: tokenizer, BLEU-DC, METEOR, ROUGE-L, CIDEr, Pass@k,
and a sandboxed candidate executor for code generation tasks.

Scale conventions: BLEU/METEOR/ROUGE-L on 0-100, CIDEr on 0-10, Pass@k on 0-1.
All scoring functions are pure and deterministic. METEOR is the exact-match
variant (alpha=0.9, beta=3, gamma=0.5); CIDEr is the plain TF-IDF cosine
formulation without length penalty.
"""

from __future__ import annotations

import math
import re
import subprocess
import sys
import tempfile
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import CodegenTask


class MetricError(Exception):
    pass


# ---------------------------------------------------------------------------
# Tokenization

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split words/digit-runs, and isolate punctuation characters."""
    return _TOKEN_RE.findall(text.lower())


# ---------------------------------------------------------------------------
# BLEU-DC: sentence BLEU, uniform 4-gram weights, Chen & Cherry smoothing 4

_SMOOTH4_K = 5.0


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_dc(candidate: list[str], reference: list[str]) -> float:
    """Sentence BLEU with smoothing method 4, on a 0-100 scale."""
    if not reference:
        raise MetricError("reference must be non-empty")
    if not candidate:
        return 0.0
    hyp_len = len(candidate)
    numerators: list[int] = []
    denominators: list[int] = []
    for n in range(1, 5):
        cand_counts = _ngram_counts(candidate, n)
        ref_counts = _ngram_counts(reference, n)
        numerators.append(
            sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        )
        denominators.append(max(1, sum(cand_counts.values())))
    if numerators[0] == 0:
        return 0.0
    precisions: list[float] = []
    incvnt = 1
    for num, den in zip(numerators, denominators):
        if num == 0 and hyp_len > 1:
            precisions.append((1.0 / (2**incvnt * _SMOOTH4_K / math.log(hyp_len))) / den)
            incvnt += 1
        else:
            precisions.append(num / den)
    if any(p == 0.0 for p in precisions):
        return 0.0  # single-token candidate with unmatched higher orders
    ref_len = len(reference)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    log_sum = math.fsum(0.25 * math.log(p) for p in precisions)
    return 100.0 * bp * math.exp(log_sum)


# ---------------------------------------------------------------------------
# METEOR (exact-match variant)


def _match_chunks(candidate: list[str], reference: list[str]) -> tuple[int, int]:
    """Greedy longest-fragment alignment; returns (matches, chunks).

    Repeatedly consumes the longest contiguous substring common to the
    unconsumed parts of both sequences; each fragment is one chunk.
    """
    cand_free = [True] * len(candidate)
    ref_free = [True] * len(reference)
    matches = 0
    chunks = 0
    while True:
        best_len, best_c, best_r = 0, -1, -1
        for ci in range(len(candidate)):
            if not cand_free[ci]:
                continue
            for ri in range(len(reference)):
                if not ref_free[ri]:
                    continue
                length = 0
                while (
                    ci + length < len(candidate)
                    and ri + length < len(reference)
                    and cand_free[ci + length]
                    and ref_free[ri + length]
                    and candidate[ci + length] == reference[ri + length]
                ):
                    length += 1
                if length > best_len:
                    best_len, best_c, best_r = length, ci, ri
        if best_len == 0:
            break
        for off in range(best_len):
            cand_free[best_c + off] = False
            ref_free[best_r + off] = False
        matches += best_len
        chunks += 1
    return matches, chunks


def meteor(candidate: list[str], reference: list[str]) -> float:
    """Exact-match METEOR: F-mean with alpha=0.9, chunk penalty gamma=0.5, beta=3."""
    if not reference:
        raise MetricError("reference must be non-empty")
    if not candidate:
        return 0.0
    matches, chunks = _match_chunks(candidate, reference)
    if matches == 0:
        return 0.0
    p = matches / len(candidate)
    r = matches / len(reference)
    f = (p * r) / (0.9 * p + 0.1 * r)
    penalty = 0.5 * (chunks / matches) ** 3
    return 100.0 * f * (1.0 - penalty)


# ---------------------------------------------------------------------------
# ROUGE-L


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: list[str], reference: list[str]) -> float:
    """LCS-based F1 on a 0-100 scale."""
    if not reference:
        raise MetricError("reference must be non-empty")
    if not candidate:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(reference)
    return 100.0 * 2.0 * p * r / (p + r)


# ---------------------------------------------------------------------------
# CIDEr


def cider(candidates: list[list[str]], references: list[list[str]]) -> float:
    """Corpus CIDEr on a 0-10 scale: TF-IDF n-gram cosine, n = 1..4."""
    if len(candidates) != len(references):
        raise MetricError("candidate and reference counts differ")
    n_docs = len(references)
    if n_docs < 2:
        raise MetricError("CIDEr needs a corpus of at least 2 examples")
    per_example: list[float] = []
    sims_by_n: list[list[float]] = []
    for n in range(1, 5):
        ref_counts = [_ngram_counts(r, n) for r in references]
        df: Counter = Counter()
        for counts in ref_counts:
            df.update(set(counts))
        idf = {g: math.log(n_docs / (1.0 + df[g])) for g in df}

        def tfidf(counts: Counter) -> dict:
            return {g: c * idf.get(g, math.log(n_docs)) for g, c in counts.items()}

        sims = []
        for cand, rc in zip(candidates, ref_counts):
            v_c = tfidf(_ngram_counts(cand, n))
            v_r = tfidf(rc)
            dot = sum(v_c[g] * v_r[g] for g in v_c.keys() & v_r.keys())
            norm_c = math.sqrt(sum(x * x for x in v_c.values()))
            norm_r = math.sqrt(sum(x * x for x in v_r.values()))
            sims.append(dot / (norm_c * norm_r) if norm_c > 0 and norm_r > 0 else 0.0)
        sims_by_n.append(sims)
    for i in range(n_docs):
        per_example.append(10.0 * sum(sims_by_n[n][i] for n in range(4)) / 4.0)
    return sum(per_example) / n_docs


# ---------------------------------------------------------------------------
# Pass@k


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased estimator 1 - C(n-c, k)/C(n, k) in stable product form."""
    if not (0 <= c <= n):
        raise MetricError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not (1 <= k <= n):
        raise MetricError(f"need 1 <= k <= n, got k={k}, n={n}")
    if n - c < k:
        return 1.0
    prod = 1.0
    for i in range(n - c + 1, n + 1):
        prod *= 1.0 - k / i
    return 1.0 - prod


# ---------------------------------------------------------------------------
# Sandboxed execution


@dataclass(frozen=True)
class ExecOutcome:
    task_id: str
    passed: bool
    status: str  # ok | test_failure | timeout | crash
    wall_ms: float


@dataclass
class ExecLimits:
    wall_s: float = 10.0
    output_bytes: int = 1 << 20


class RunnerConfigError(Exception):
    """Runner binary missing or template malformed (not a test failure)."""


def assemble_program(task: CodegenTask, completion: str) -> str:
    parts = [task.prompt, completion, "", task.tests]
    if "def check" in task.tests and f"check({task.entry_point})" not in task.tests:
        parts.append(f"\ncheck({task.entry_point})")
    return "\n".join(parts) + "\n"


def execute_candidate(
    task: CodegenTask,
    completion: str,
    limits: ExecLimits | None = None,
    runner: str = "{interpreter} {file}",
) -> ExecOutcome:
    """Run prompt+completion+tests as an isolated child process in a temp dir."""
    limits = limits or ExecLimits()
    if "{file}" not in runner:
        raise RunnerConfigError("runner template must contain a {file} placeholder")
    program = assemble_program(task, completion)
    with tempfile.TemporaryDirectory(prefix="sotana-exec-") as tmp:
        path = Path(tmp) / "candidate.py"
        path.write_text(program, encoding="utf-8")
        cmd = runner.format(interpreter=sys.executable, file=str(path)).split()
        start = time.monotonic()
        try:
            proc = subprocess.run(
                cmd,
                cwd=tmp,
                capture_output=True,
                timeout=limits.wall_s,
            )
        except subprocess.TimeoutExpired:
            wall_ms = (time.monotonic() - start) * 1000.0
            return ExecOutcome(task.task_id, False, "timeout", wall_ms)
        except FileNotFoundError as exc:
            raise RunnerConfigError(f"runner binary not found: {cmd[0]}") from exc
        wall_ms = (time.monotonic() - start) * 1000.0
        _ = proc.stdout[: limits.output_bytes], proc.stderr[: limits.output_bytes]
        if proc.returncode == 0:
            return ExecOutcome(task.task_id, True, "ok", wall_ms)
        status = "crash" if proc.returncode < 0 else "test_failure"
        return ExecOutcome(task.task_id, False, status, wall_ms)


# ---------------------------------------------------------------------------
# Corpus-level report


@dataclass
class MetricReport:
    scale: dict = field(
        default_factory=lambda: {
            "bleu": "0-100",
            "meteor": "0-100",
            "rouge_l": "0-100",
            "cider": "0-10",
            "meteor_variant": "exact-match, alpha=0.9 beta=3 gamma=0.5",
            "cider_variant": "plain (no length penalty)",
        }
    )
    per_example: list = field(default_factory=list)
    corpus: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "per_example": self.per_example,
            "corpus": self.corpus,
        }


def score_corpus(
    ids: list[str], candidates: list[str], references: list[str]
) -> MetricReport:
    """Tokenize and score a set of (candidate, reference) text pairs."""
    if not (len(ids) == len(candidates) == len(references)):
        raise MetricError("ids, candidates, and references must align")
    report = MetricReport()
    cand_toks = [tokenize(c) for c in candidates]
    ref_toks = [tokenize(r) for r in references]
    for id_, ct, rt in zip(ids, cand_toks, ref_toks):
        report.per_example.append(
            {
                "id": id_,
                "bleu": bleu_dc(ct, rt),
                "meteor": meteor(ct, rt),
                "rouge_l": rouge_l(ct, rt),
            }
        )
    n = len(ids)
    report.corpus = {
        "bleu_mean": sum(e["bleu"] for e in report.per_example) / n,
        "meteor_mean": sum(e["meteor"] for e in report.per_example) / n,
        "rouge_l_mean": sum(e["rouge_l"] for e in report.per_example) / n,
        "cider": cider(cand_toks, ref_toks) if n >= 2 else None,
    }
    return report
