"""Human-evaluation engine: two-rater assignment, rating storage, aggregation,
Krippendorff's alpha (ordinal), Kendall's tau-b, and the adjudication queue.

Each pair is rated on four 0-3 dimensions (alignment, accuracy, readability,
confidence). Confidence is excluded from aggregation; ratings with confidence
below the adjudication threshold are queued for a senior re-rating which
replaces the low-confidence record. Model identity is kept out of every
rater-facing payload.
"""

from __future__ import annotations

import itertools
import json
import math
import random
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

SCORE_DIMENSIONS = ("alignment", "accuracy", "readability")
ALL_DIMENSIONS = SCORE_DIMENSIONS + ("confidence",)
SCORE_MIN, SCORE_MAX = 0, 3
RUBRIC_VERSION = "1"

RUBRIC = {
    "alignment": [
        "The answer is irrelevant to the question.",
        "The answer shows little understanding of the question.",
        "The answer is mostly relevant but misses part of the question.",
        "The answer fully addresses the question.",
    ],
    "accuracy": [
        "The answer is incorrect or misleading.",
        "The answer contains major errors.",
        "The answer is mostly correct with minor issues.",
        "The answer is correct and the solution is valid.",
    ],
    "readability": [
        "The answer is unreadable or incoherent.",
        "The answer is hard to follow with many errors.",
        "The answer is understandable with minor issues.",
        "The answer is fluent, well formatted, and grammatical.",
    ],
    "confidence": [
        "No confidence in the evaluation.",
        "Low confidence, with doubts about the scores.",
        "Fairly confident, minor uncertainties.",
        "Highly confident about the assigned scores.",
    ],
}


class StudyError(Exception):
    pass


class RatingRejected(StudyError):
    """Rating violates range or assignment constraints."""


@dataclass(frozen=True)
class Pair:
    pair_id: str
    question_title: str
    question_body: str
    answer_text: str
    hidden_model_tag: str


@dataclass
class RatingRecord:
    pair_id: str
    rater_id: str
    alignment: int
    accuracy: int
    readability: int
    confidence: int
    timestamp: float = 0.0

    def score(self, dimension: str) -> int:
        return getattr(self, dimension)


def create_assignments(
    pairs: list[Pair], raters: list[str], per_pair: int = 2, rng: random.Random | None = None
) -> dict[str, list[str]]:
    """Assign each pair `per_pair` distinct raters, balanced within +/-1."""
    if len(set(raters)) < per_pair:
        raise StudyError(f"need at least {per_pair} distinct raters")
    rng = rng or random.Random(0)
    loads = {r: 0 for r in raters}
    assignments: dict[str, list[str]] = {}
    for pair in pairs:
        order = list(raters)
        rng.shuffle(order)
        order.sort(key=lambda r: loads[r])  # stable sort keeps the shuffle as tiebreak
        chosen = order[:per_pair]
        for r in chosen:
            loads[r] += 1
        assignments[pair.pair_id] = chosen
    return assignments


class Study:
    """In-memory study state with JSONL persistence hooks."""

    def __init__(
        self,
        pairs: list[Pair],
        assignments: dict[str, list[str]],
        audit_log: str | Path | None = None,
    ):
        ids = [p.pair_id for p in pairs]
        if len(set(ids)) != len(ids):
            raise StudyError("duplicate pair_id in study")
        missing = [i for i in ids if i not in assignments]
        if missing:
            raise StudyError(f"pairs without assignments: {missing[:5]}")
        self.pairs = {p.pair_id: p for p in pairs}
        self.assignments = assignments
        self.ratings: dict[tuple[str, str], RatingRecord] = {}
        self.adjudications: dict[tuple[str, str], RatingRecord] = {}
        self.audit_log = Path(audit_log) if audit_log else None

    # -- rating ----------------------------------------------------------

    def _validate(self, record: RatingRecord) -> None:
        for dim in ALL_DIMENSIONS:
            v = record.score(dim)
            if not (SCORE_MIN <= v <= SCORE_MAX) or not isinstance(v, int):
                raise RatingRejected(f"{dim} must be an integer in 0-3, got {v!r}")
        if record.pair_id not in self.pairs:
            raise RatingRejected(f"unknown pair {record.pair_id!r}")
        if record.rater_id not in self.assignments[record.pair_id]:
            raise RatingRejected(
                f"rater {record.rater_id!r} is not assigned to pair {record.pair_id!r}"
            )

    def record_rating(self, record: RatingRecord) -> None:
        """Store a rating; same (pair, rater) resubmission is last-write-wins."""
        self._validate(record)
        if not record.timestamp:
            record.timestamp = time.time()
        self.ratings[(record.pair_id, record.rater_id)] = record
        self._append_audit("rating", record)

    def record_adjudication(self, record: RatingRecord) -> None:
        """Senior replacement for a low-confidence rating."""
        for dim in ALL_DIMENSIONS:
            v = record.score(dim)
            if not (SCORE_MIN <= v <= SCORE_MAX):
                raise RatingRejected(f"{dim} must be in 0-3, got {v!r}")
        if record.pair_id not in self.pairs:
            raise RatingRejected(f"unknown pair {record.pair_id!r}")
        if not record.timestamp:
            record.timestamp = time.time()
        self.adjudications[(record.pair_id, record.rater_id)] = record
        self._append_audit("adjudication", record)

    def _append_audit(self, kind: str, record: RatingRecord) -> None:
        if self.audit_log is None:
            return
        with self.audit_log.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": kind, **asdict(record)}) + "\n")

    # -- rater-facing payloads (blind) -----------------------------------

    def next_pair_for(self, rater_id: str) -> dict | None:
        """Next assigned, unrated pair as a blind payload, or None when done."""
        for pair_id in sorted(self.assignments):
            if rater_id not in self.assignments[pair_id]:
                continue
            if (pair_id, rater_id) in self.ratings:
                continue
            p = self.pairs[pair_id]
            return {
                "pair_id": p.pair_id,
                "title": p.question_title,
                "body": p.question_body,
                "answer": p.answer_text,
                "rubric_version": RUBRIC_VERSION,
            }
        return None

    def progress_for(self, rater_id: str) -> tuple[int, int]:
        assigned = [pid for pid, rs in self.assignments.items() if rater_id in rs]
        rated = sum(1 for pid in assigned if (pid, rater_id) in self.ratings)
        return rated, len(assigned)

    def known_rater(self, rater_id: str) -> bool:
        return any(rater_id in rs for rs in self.assignments.values())

    # -- adjudication ----------------------------------------------------

    def adjudication_queue(self, threshold: int = 2) -> list[dict]:
        """Ratings with confidence below threshold, minus adjudicated, by time."""
        queue = [
            r
            for (pid, rid), r in self.ratings.items()
            if r.confidence < threshold and (pid, rid) not in self.adjudications
        ]
        queue.sort(key=lambda r: (r.timestamp, r.pair_id, r.rater_id))
        return [{"pair_id": r.pair_id, "rater_id": r.rater_id} for r in queue]

    def effective_rating(self, pair_id: str, rater_id: str) -> RatingRecord | None:
        if (pair_id, rater_id) in self.adjudications:
            return self.adjudications[(pair_id, rater_id)]
        return self.ratings.get((pair_id, rater_id))

    # -- aggregation -----------------------------------------------------

    def aggregate_scores(self, allow_incomplete: bool = False) -> dict:
        """Per-model mean and population std of the two-rater average scores."""
        incomplete = [
            pid
            for pid, rs in self.assignments.items()
            if any(self.effective_rating(pid, r) is None for r in rs)
        ]
        if incomplete and not allow_incomplete:
            raise StudyError(f"study incomplete; missing pairs: {sorted(incomplete)[:10]}")
        by_model: dict[str, dict[str, list[float]]] = {}
        for pid, rs in self.assignments.items():
            if pid in incomplete:
                continue
            records = [self.effective_rating(pid, r) for r in rs]
            model = self.pairs[pid].hidden_model_tag
            slot = by_model.setdefault(model, {d: [] for d in SCORE_DIMENSIONS})
            for dim in SCORE_DIMENSIONS:
                slot[dim].append(
                    sum(rec.score(dim) for rec in records) / len(records)
                )
        out: dict[str, dict[str, dict[str, float]]] = {}
        for model, dims in by_model.items():
            out[model] = {}
            for dim, vals in dims.items():
                mean = sum(vals) / len(vals)
                var = sum((v - mean) ** 2 for v in vals) / len(vals)
                out[model][dim] = {"mean": mean, "std": math.sqrt(var)}
        return out

    # -- agreement -------------------------------------------------------

    def ratings_matrix(self, dimension: str) -> dict[str, dict[str, int]]:
        """item -> rater -> score for one dimension (effective ratings)."""
        matrix: dict[str, dict[str, int]] = {}
        for (pid, rid) in self.ratings:
            rec = self.effective_rating(pid, rid)
            matrix.setdefault(pid, {})[rid] = rec.score(dimension)
        return matrix

    def agreement_report(self) -> dict:
        report = {"alpha_per_dimension": {}, "pairwise_tau": {}}
        for dim in ALL_DIMENSIONS:
            matrix = self.ratings_matrix(dim)
            try:
                report["alpha_per_dimension"][dim] = krippendorff_alpha(matrix)
            except StudyError:
                report["alpha_per_dimension"][dim] = None
        raters = sorted({rid for rs in self.assignments.values() for rid in rs})
        for r1, r2 in itertools.combinations(raters, 2):
            xs, ys = [], []
            for pid, rs in self.assignments.items():
                if r1 in rs and r2 in rs:
                    a = self.effective_rating(pid, r1)
                    b = self.effective_rating(pid, r2)
                    if a and b:
                        for dim in SCORE_DIMENSIONS:  # pooled across dimensions
                            xs.append(a.score(dim))
                            ys.append(b.score(dim))
            if len(xs) >= 2:
                try:
                    report["pairwise_tau"][f"{r1}|{r2}"] = kendall_tau_b(xs, ys)
                except StudyError:
                    report["pairwise_tau"][f"{r1}|{r2}"] = None
        return report


# ---------------------------------------------------------------------------
# Agreement statistics


def krippendorff_alpha(
    matrix: dict[str, dict[str, int]], level: str = "ordinal"
) -> float:
    """Coincidence-matrix Krippendorff's alpha with ordinal distances.

    `matrix` maps item -> rater -> score; missing entries simply absent.
    """
    units = [list(r.values()) for r in matrix.values() if len(r) >= 2]
    if len(units) < 2:
        raise StudyError("need at least 2 items with at least 2 ratings each")
    values = sorted({v for unit in units for v in unit})
    idx = {v: i for i, v in enumerate(values)}
    v = len(values)
    # coincidence matrix
    o = [[0.0] * v for _ in range(v)]
    for unit in units:
        m = len(unit)
        for i, a in enumerate(unit):
            for j, b in enumerate(unit):
                if i != j:
                    o[idx[a]][idx[b]] += 1.0 / (m - 1)
    n_c = [sum(row) for row in o]
    n_total = sum(n_c)
    if v == 1:
        return 1.0  # all ratings identical and only one category observed

    def delta2(ci: int, ki: int) -> float:
        if level == "nominal":
            return 0.0 if ci == ki else 1.0
        lo, hi = min(ci, ki), max(ci, ki)
        s = sum(n_c[g] for g in range(lo, hi + 1)) - (n_c[lo] + n_c[hi]) / 2.0
        return s * s

    d_o = sum(
        o[ci][ki] * delta2(ci, ki) for ci in range(v) for ki in range(v) if ci != ki
    )
    d_e = sum(
        n_c[ci] * n_c[ki] * delta2(ci, ki)
        for ci in range(v)
        for ki in range(v)
        if ci != ki
    ) / (n_total - 1)
    if d_e == 0:
        return 1.0
    return 1.0 - d_o / d_e


def kendall_tau_b(x: list[float], y: list[float]) -> float:
    """Kendall's tau-b with tie correction, by direct pair enumeration."""
    if len(x) != len(y):
        raise StudyError("score lists must have equal length")
    n = len(x)
    if n < 2:
        raise StudyError("need at least 2 observations")
    concordant = discordant = ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                ties_x += 1
                ties_y += 1
            elif dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) // 2
    denom = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    if denom == 0:
        raise StudyError("tau-b undefined: all pairs tied")
    return (concordant - discordant) / denom


# ---------------------------------------------------------------------------
# Persistence


def load_pairs(path: str | Path) -> list[Pair]:
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        pairs.append(
            Pair(
                pair_id=str(obj["pair_id"]),
                question_title=obj["question_title"],
                question_body=obj["question_body"],
                answer_text=obj["answer_text"],
                hidden_model_tag=obj["hidden_model_tag"],
            )
        )
    return pairs


def save_snapshot(study: Study, path: str | Path) -> None:
    blob = {
        "assignments": study.assignments,
        "ratings": [asdict(r) for r in study.ratings.values()],
        "adjudications": [asdict(r) for r in study.adjudications.values()],
    }
    Path(path).write_text(json.dumps(blob, indent=2), encoding="utf-8")


def load_snapshot(study: Study, path: str | Path) -> Study:
    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    study.assignments = blob["assignments"]
    for r in blob["ratings"]:
        rec = RatingRecord(**r)
        study.ratings[(rec.pair_id, rec.rater_id)] = rec
    for r in blob["adjudications"]:
        rec = RatingRecord(**r)
        study.adjudications[(rec.pair_id, rec.rater_id)] = rec
    return study
