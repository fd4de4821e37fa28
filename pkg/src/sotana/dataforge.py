"""Self-instruct generation of software-engineering instruction data.

The loop: sample 5 in-context demonstrations (3 from the curated seed pool,
2 from previously generated data), assemble a generation prompt, query a
completion backend, parse numbered (instruction, input, output) blocks out
of the completion, filter them, and append survivors to the pool until the
target dataset size is reached or the query budget runs out.

Backends are pluggable: an OpenAI-compatible HTTP endpoint, or a fully
deterministic fixture-driven mock for tests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from threading import Lock

log = logging.getLogger(__name__)

NOINPUT_TOKEN = "<noinput>"

TASK_DESCRIPTION = (
    "You are asked to come up with a set of diverse task instructions in the "
    "domain of software engineering. These task instructions will be given to "
    "a language model and we will evaluate the model on completing them."
)

REQUIREMENTS_BLOCK = """Here are the requirements:
1. Try not to repeat the verb for each instruction to maximize diversity.
2. The language used for the instruction also should be diverse.
3. The type of instructions should be diverse, covering code generation, debugging, code explanation, software design, testing, and general software-engineering questions.
4. All instructions and responses must be in English.
5. The instructions should be 1 to 2 sentences long and contain at least three words.
6. You should generate an appropriate input to the instruction. The input field should contain a specific example provided for the instruction, such as a code snippet or an error message. It should not contain simple placeholders. If the instruction does not require an input, use "<noinput>" in the input field.
7. The output should be an appropriate, correct response to the instruction and the input."""

CONTINUATION_CUE = "List of tasks:"


class ForgeError(Exception):
    """Fatal generation problem: bad configuration or exhausted backend."""


@dataclass(frozen=True)
class InstructionTriple:
    instruction: str
    input: str
    output: str
    origin: str = "generated"  # "seed" | "generated"

    def key(self) -> tuple[str, str, str]:
        return (self.instruction, self.input, self.output)


@dataclass
class SeedPool:
    seeds: list[InstructionTriple] = field(default_factory=list)
    generated: list[InstructionTriple] = field(default_factory=list)

    def __post_init__(self):
        self._keys = {t.key() for t in self.seeds} | {t.key() for t in self.generated}
        if len(self._keys) != len(self.seeds) + len(self.generated):
            raise ForgeError("seed pool contains duplicate triples")

    def contains(self, t: InstructionTriple) -> bool:
        return t.key() in self._keys

    def add_generated(self, t: InstructionTriple) -> None:
        if self.contains(t):
            raise ForgeError("attempted to add duplicate triple to pool")
        self.generated.append(t)
        self._keys.add(t.key())


@dataclass
class ForgeConfig:
    target_count: int = 100
    batch_completions: int = 5  # instances requested per query
    seed_demos: int = 3
    generated_demos: int = 2
    temperature: float = 1.0
    max_tokens: int = 1024
    rng_seed: int = 0
    max_queries: int = 1000
    concurrency: int = 1
    model: str = "forge-backend"

    def __post_init__(self):
        if self.seed_demos + self.generated_demos != 5:
            raise ForgeError("seed_demos + generated_demos must equal 5")
        if self.target_count < 0:
            raise ForgeError("target_count must be >= 0")
        if self.concurrency < 1:
            raise ForgeError("concurrency must be >= 1")


@dataclass
class FilterReport:
    accepted: int = 0
    rejected_by_reason: dict[str, int] = field(
        default_factory=lambda: {
            "format": 0,
            "non_english": 0,
            "short_instruction": 0,
            "duplicate": 0,
        }
    )
    budget_exhausted: bool = False
    queries: int = 0

    @property
    def total_candidates(self) -> int:
        return self.accepted + sum(self.rejected_by_reason.values())


# ---------------------------------------------------------------------------
# Backends


class MockBackend:
    """Deterministic fixture-driven backend.

    Fixture is JSONL of {"match": "<sha256-of-prompt-or-*>", "text": "..."}.
    Exact hash matches take priority; "*" entries are consumed round-robin.
    """

    kind = "mock"

    def __init__(self, fixture: str | Path):
        self.fixture = Path(fixture)
        self._by_hash: dict[str, str] = {}
        self._wildcard: list[str] = []
        self._cursor = 0
        self._lock = Lock()
        for line in self.fixture.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj["match"] == "*":
                self._wildcard.append(obj["text"])
            else:
                self._by_hash[obj["match"]] = obj["text"]

    @staticmethod
    def prompt_hash(prompt: str) -> str:
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()

    def complete(self, prompt: str, cfg: ForgeConfig) -> str:
        h = self.prompt_hash(prompt)
        if h in self._by_hash:
            return self._by_hash[h]
        if not self._wildcard:
            raise ForgeError(f"mock fixture has no entry for prompt hash {h}")
        with self._lock:
            text = self._wildcard[self._cursor % len(self._wildcard)]
            self._cursor += 1
        return text


class HttpBackend:
    """OpenAI-compatible completions client with retry + exponential backoff."""

    kind = "http"

    def __init__(self, endpoint: str, retries: int = 3, backoff_s: float = 1.0):
        self.endpoint = endpoint.rstrip("/")
        self.retries = retries
        self.backoff_s = backoff_s

    def complete(self, prompt: str, cfg: ForgeConfig) -> str:
        import requests

        body = {
            "model": cfg.model,
            "prompt": prompt,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
            "n": 1,
            "stop": [],
        }
        delay = self.backoff_s
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(
                    f"{self.endpoint}/v1/completions", json=body, timeout=60
                )
                resp.raise_for_status()
                return resp.json()["choices"][0]["text"]
            except Exception as exc:  # transport or schema failure
                last_exc = exc
                if attempt < self.retries:
                    log.warning("backend query failed (%s), retrying in %.1fs", exc, delay)
                    time.sleep(delay)
                    delay *= 2
        raise ForgeError(f"backend unreachable after {self.retries} retries: {last_exc}")


def make_backend(kind: str, endpoint: str = "", fixture: str = ""):
    if kind == "mock":
        if not fixture:
            raise ForgeError("mock backend requires a fixture path")
        return MockBackend(fixture)
    if kind == "http":
        if not endpoint:
            raise ForgeError("http backend requires an endpoint URL")
        return HttpBackend(endpoint)
    raise ForgeError(f"unknown backend kind {kind!r}")


# ---------------------------------------------------------------------------
# Prompt assembly and parsing


def sample_demonstrations(
    pool: SeedPool, cfg: ForgeConfig, rng: random.Random
) -> list[InstructionTriple]:
    """Pick 5 demos: 3 from seeds, 2 from generated, seeds filling any shortfall."""
    if len(pool.seeds) < cfg.seed_demos:
        raise ForgeError(f"need at least {cfg.seed_demos} seeds, have {len(pool.seeds)}")
    seed_part = rng.sample(pool.seeds, cfg.seed_demos)
    gen_needed = cfg.generated_demos
    gen_part = (
        rng.sample(pool.generated, gen_needed)
        if len(pool.generated) >= gen_needed
        else list(pool.generated)
    )
    shortfall = gen_needed - len(gen_part)
    if shortfall:
        remaining = [t for t in pool.seeds if t not in seed_part]
        if len(remaining) < shortfall:
            raise ForgeError("fewer than 5 distinct triples available for demos")
        gen_part = gen_part + rng.sample(remaining, shortfall)
    return seed_part + gen_part


def _render_demo(idx: int, t: InstructionTriple) -> str:
    inp = t.input if t.input else NOINPUT_TOKEN
    return (
        f"{idx}. Instruction: {t.instruction}\n"
        f"Input: {inp}\n"
        f"Output: {t.output}"
    )


def assemble_prompt(demos: list[InstructionTriple]) -> str:
    if len(demos) != 5:
        raise ForgeError(f"expected exactly 5 demos, got {len(demos)}")
    blocks = [_render_demo(i + 1, t) for i, t in enumerate(demos)]
    return "\n\n".join(
        [TASK_DESCRIPTION, REQUIREMENTS_BLOCK, CONTINUATION_CUE]
        + blocks
        + ["6. Instruction:"]
    )


_BLOCK_RE = re.compile(r"(?:^|\n)\s*\d+\.\s*Instruction:", re.IGNORECASE)


def _parse_blocks(raw: str) -> tuple[list[InstructionTriple], int]:
    """Split raw text on numbered Instruction headers; returns (triples, malformed)."""
    starts = [m for m in _BLOCK_RE.finditer(raw)]
    triples: list[InstructionTriple] = []
    malformed = 0
    for i, m in enumerate(starts):
        begin = m.end()
        end = starts[i + 1].start() if i + 1 < len(starts) else len(raw)
        block = raw[begin:end]
        fields = re.match(
            r"(?P<instruction>.*?)\nInput:(?P<input>.*?)\nOutput:(?P<output>.*)",
            block,
            re.DOTALL | re.IGNORECASE,
        )
        if not fields:
            malformed += 1
            continue
        instruction = fields.group("instruction").strip()
        inp = fields.group("input").strip()
        out = fields.group("output").strip()
        if not instruction or not out:
            malformed += 1
            continue
        if inp == NOINPUT_TOKEN:
            inp = ""
        triples.append(
            InstructionTriple(instruction=instruction, input=inp, output=out)
        )
    return triples, malformed


def parse_completion(raw: str) -> list[InstructionTriple]:
    """Extract well-formed triples from a completion; incomplete blocks drop."""
    return _parse_blocks(raw)[0]


# ---------------------------------------------------------------------------
# Filtering


def _ascii_alpha_ratio(text: str) -> float:
    alpha = [c for c in text if c.isalpha()]
    if not alpha:
        return 1.0
    ascii_alpha = sum(1 for c in alpha if c.isascii())
    return ascii_alpha / len(alpha)


def is_english(t: InstructionTriple, threshold: float = 0.9) -> bool:
    return _ascii_alpha_ratio(t.instruction + t.input + t.output) >= threshold


def filter_triple(t: InstructionTriple, existing: SeedPool) -> str | None:
    """Returns None on accept, else the rejection reason."""
    if len(t.instruction.split()) < 3:
        return "short_instruction"
    if not is_english(t):
        return "non_english"
    if existing.contains(t):
        return "duplicate"
    return None


# ---------------------------------------------------------------------------
# Generation loops


def _query_batch(backend, prompts: list[str], cfg: ForgeConfig) -> list[str]:
    """Issue up to `concurrency` requests; results committed in issue order."""
    if len(prompts) == 1:
        return [backend.complete(prompts[0], cfg)]
    with ThreadPoolExecutor(max_workers=len(prompts)) as pool:
        futures = [pool.submit(backend.complete, p, cfg) for p in prompts]
        return [f.result() for f in futures]


def run_generation(
    backend, pool: SeedPool, cfg: ForgeConfig
) -> tuple[list[InstructionTriple], FilterReport]:
    """Generate triples until target_count accepted or the query budget runs out."""
    rng = random.Random(cfg.rng_seed)
    report = FilterReport()
    dataset: list[InstructionTriple] = []
    while len(dataset) < cfg.target_count and report.queries < cfg.max_queries:
        n_inflight = min(
            cfg.concurrency, cfg.max_queries - report.queries
        )
        prompts = [
            assemble_prompt(sample_demonstrations(pool, cfg, rng))
            for _ in range(n_inflight)
        ]
        completions = _query_batch(backend, prompts, cfg)
        report.queries += n_inflight
        done = False
        for raw in completions:
            triples, malformed = _parse_blocks(raw)
            report.rejected_by_reason["format"] += malformed
            for t in triples:
                reason = filter_triple(t, pool)
                if reason is None:
                    pool.add_generated(t)
                    dataset.append(t)
                    report.accepted += 1
                    if len(dataset) >= cfg.target_count:
                        done = True
                        break
                else:
                    report.rejected_by_reason[reason] += 1
            if done:
                break
        if done:
            break
    if len(dataset) < cfg.target_count:
        report.budget_exhausted = True
        log.warning(
            "query budget exhausted: %d/%d triples generated",
            len(dataset),
            cfg.target_count,
        )
    return dataset, report


def bootstrap_seeds(
    backend,
    external_demos: list[InstructionTriple],
    n_candidates: int,
    cfg: ForgeConfig | None = None,
    review_path: str | Path | None = None,
) -> list[InstructionTriple]:
    """Generate seed candidates from external demos only, for human curation.

    Each prompt carries 3 sampled external demos (padded to 5 with further
    external demos, cycling when only 3 exist); survivors of the standard
    filters are written to `review_path` for manual selection.
    """
    if len(external_demos) < 3:
        raise ForgeError("bootstrap requires at least 3 external demos")
    cfg = cfg or ForgeConfig()
    rng = random.Random(cfg.rng_seed)
    scratch = SeedPool()  # dedup among candidates only
    survivors: list[InstructionTriple] = []
    queries = 0
    while len(survivors) < n_candidates and queries < cfg.max_queries:
        base = rng.sample(external_demos, 3)
        # pad to the 5-slot prompt, reusing external demos (never generated ones)
        pad = [external_demos[(i + queries) % len(external_demos)] for i in range(2)]
        prompt = assemble_prompt(base[:3] + pad)
        raw = backend.complete(prompt, cfg)
        queries += 1
        for t in parse_completion(raw):
            if filter_triple(t, scratch) is None:
                scratch.add_generated(t)
                survivors.append(t)
                if len(survivors) >= n_candidates:
                    break
    if review_path is not None:
        write_dataset(survivors, review_path)
    return survivors


# ---------------------------------------------------------------------------
# Dataset I/O


def write_dataset(triples: list[InstructionTriple], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(
                json.dumps(
                    {"instruction": t.instruction, "input": t.input, "output": t.output},
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_dataset(path: str | Path, origin: str = "generated") -> list[InstructionTriple]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        out.append(
            InstructionTriple(
                instruction=obj["instruction"],
                input=obj.get("input", ""),
                output=obj["output"],
                origin=origin,
            )
        )
    return out
