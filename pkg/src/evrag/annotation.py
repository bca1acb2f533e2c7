"""Blinded rating sessions, durable rating storage, and score aggregation.

Raters see answers from both conditions in a seeded shuffled order with
no condition marker anywhere in their payloads; the condition lives only
in the server-side session plan. Ratings are appended to a line-oriented
file and never rewritten: resubmitting an (annotator, item, axis) key
supersedes the older rating, and the superseded row stays on disk for
audit.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import hashlib
import json
import logging
import os
import random
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .engine import Mode, QuestionRecord, RunArchive, Topic
from .errors import ValidationError
from .stats import ComparisonResult, compare_paired

log = logging.getLogger(__name__)

RATING_MIN, RATING_MAX = 1, 5

# order of per-topic rows in the ratings report
TOPIC_ORDER = [Topic.CATARACT, Topic.GLAUCOMA, Topic.RETINA, Topic.DRY_EYE, Topic.UVEITIS]

_CONDITION_TOKEN_RE = re.compile(r"\b(?:no_rag|rag|condition)\b", re.IGNORECASE)


class Axis(str, enum.Enum):
    ACCURACY = "accuracy"
    COMPLETENESS = "completeness"
    ATTRIBUTION = "attribution"


AXES = [Axis.ACCURACY, Axis.COMPLETENESS, Axis.ATTRIBUTION]


@dataclass
class AnnotationItem:
    item_id: str
    question_id: str
    condition: Mode  # server-side only, never serialized to raters
    display_order: int
    presented_text: str

    def to_server_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "question_id": self.question_id,
            "condition": self.condition.value,
            "display_order": self.display_order,
            "presented_text": self.presented_text,
        }

    def to_rater_json(self, total: int) -> dict:
        """Rater-facing view: opaque id, position, text. Nothing else."""
        return {
            "item_id": self.item_id,
            "position": self.display_order,
            "total": total,
            "presented_text": self.presented_text,
        }


@dataclass
class SessionPlan:
    session_id: str
    annotator_id: str
    seed: int
    items: list[AnnotationItem]

    def __post_init__(self):
        self._by_item = {item.item_id: item for item in self.items}

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._by_item

    def get(self, item_id: str) -> AnnotationItem:
        try:
            return self._by_item[item_id]
        except KeyError:
            raise ValidationError("unknown_item", f"no item {item_id!r} in session {self.session_id!r}")

    def in_display_order(self) -> list[AnnotationItem]:
        return sorted(self.items, key=lambda i: i.display_order)

    def to_server_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "annotator_id": self.annotator_id,
            "seed": self.seed,
            "items": [i.to_server_json() for i in self.items],
        }

    def to_rater_json(self) -> dict:
        total = len(self.items)
        return {
            "session_id": self.session_id,
            "items": [i.to_rater_json(total) for i in self.in_display_order()],
        }

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_server_json(), fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SessionPlan":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        items = [
            AnnotationItem(
                item_id=i["item_id"],
                question_id=i["question_id"],
                condition=Mode(i["condition"]),
                display_order=i["display_order"],
                presented_text=i["presented_text"],
            )
            for i in obj["items"]
        ]
        return cls(obj["session_id"], obj["annotator_id"], int(obj["seed"]), items)


def contains_condition_token(text: str) -> bool:
    """True if a rater-visible string leaks a condition-identifying token."""
    return bool(_CONDITION_TOKEN_RE.search(text))


def build_blinded_session(
    questions: list[QuestionRecord],
    archive: RunArchive,
    annotator_id: str,
    seed: int,
    session_id: str | None = None,
) -> SessionPlan:
    """Both conditions of every question, in a seeded shuffled order.

    Regenerating with the same questions, archive, annotator, and seed
    reproduces the identical plan. Missing (question, condition) results
    abort with the full gap list.
    """
    if not questions:
        raise ValidationError("no_questions", "cannot build a session over zero questions")
    session_id = session_id or f"s{seed}-{annotator_id}"
    by_key = {(r.question_id, r.mode): r for r in archive.results}
    gaps = [
        f"{q.question_id}/{mode.value}"
        for q in questions
        for mode in (Mode.NO_RAG, Mode.RAG)
        if (q.question_id, mode) not in by_key
    ]
    if gaps:
        raise ValidationError("missing_condition", "archive lacks results for: " + ", ".join(gaps))
    pairs = [(q, mode) for q in questions for mode in (Mode.NO_RAG, Mode.RAG)]
    rng = random.Random(seed)
    rng.shuffle(pairs)
    items = []
    for order, (question, mode) in enumerate(pairs, start=1):
        digest = hashlib.sha256(f"{session_id}|{question.question_id}|{mode.value}".encode()).hexdigest()
        items.append(
            AnnotationItem(
                item_id=f"itm{digest[:12]}",
                question_id=question.question_id,
                condition=mode,
                display_order=order,
                presented_text=by_key[(question.question_id, mode)].answer_text,
            )
        )
    return SessionPlan(session_id=session_id, annotator_id=annotator_id, seed=seed, items=items)


@dataclass
class Rating:
    annotator_id: str
    item_id: str
    axis: Axis
    score: int
    recorded_at: str = ""

    def __post_init__(self):
        if not isinstance(self.axis, Axis):
            self.axis = Axis(self.axis)
        if not self.recorded_at:
            self.recorded_at = dt.datetime.now(dt.timezone.utc).isoformat()

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.annotator_id, self.item_id, self.axis.value)

    def to_json(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "item_id": self.item_id,
            "axis": self.axis.value,
            "score": self.score,
            "recorded_at": self.recorded_at,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Rating":
        return cls(obj["annotator_id"], obj["item_id"], Axis(obj["axis"]), int(obj["score"]), obj["recorded_at"])


class RatingStore:
    """Append-only rating log; newest entry per (annotator, item, axis) wins."""

    def __init__(self, path):
        self.path = Path(path)
        self._all: list[Rating] = []
        self._latest: dict[tuple[str, str, str], Rating] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._absorb(Rating.from_json(json.loads(line)))

    def _absorb(self, rating: Rating) -> bool:
        superseded = rating.key in self._latest
        self._all.append(rating)
        self._latest[rating.key] = rating
        return superseded

    def append(self, rating: Rating) -> bool:
        """Durably append; returns True when an older rating was superseded."""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(rating.to_json(), sort_keys=True, ensure_ascii=False) + "\n"
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())
        superseded = self._absorb(rating)
        if superseded:
            log.info("rating superseded: %s", rating.key)
        return superseded

    def latest(self) -> dict[tuple[str, str, str], Rating]:
        return dict(self._latest)

    def all_ratings(self) -> list[Rating]:
        return list(self._all)

    def __len__(self) -> int:
        return len(self._all)


def validate_rating(rating: Rating) -> None:
    if not isinstance(rating.score, int) or isinstance(rating.score, bool):
        raise ValidationError("score_out_of_range", "score must be an integer between 1 and 5")
    if not (RATING_MIN <= rating.score <= RATING_MAX):
        raise ValidationError("score_out_of_range", f"score {rating.score} outside {RATING_MIN}..{RATING_MAX}")


def record_rating(rating: Rating, plan: SessionPlan, store: RatingStore) -> dict:
    """Validate against the session plan and durably append."""
    validate_rating(rating)
    if rating.item_id not in plan:
        raise ValidationError("unknown_item", f"item {rating.item_id!r} not in session {plan.session_id!r}")
    if plan.annotator_id != rating.annotator_id:
        raise ValidationError("foreign_session", f"session {plan.session_id!r} belongs to another annotator")
    superseded = store.append(rating)
    return {"accepted": True, "superseded": superseded}


def _resolve_ratings(latest: dict, plans: list[SessionPlan], questions: list[QuestionRecord]):
    """(annotator, question, topic, condition, axis, score) tuples for the
    latest rating of every item that resolves through a known plan."""
    item_info: dict[str, tuple[str, Mode]] = {}
    for plan in plans:
        for item in plan.items:
            item_info[item.item_id] = (item.question_id, item.condition)
    topic_of = {q.question_id: q.topic for q in questions}
    rows = []
    for rating in latest.values():
        info = item_info.get(rating.item_id)
        if info is None:
            continue
        question_id, condition = info
        topic = topic_of.get(question_id)
        rows.append((rating.annotator_id, question_id, topic, condition, rating.axis, rating.score))
    return rows


def _cell_mean(rows, axis: Axis, condition: Mode, topic: Topic | None = None) -> float | None:
    scores = [
        score
        for (_, _, t, cond, ax, score) in rows
        if ax is axis and cond is condition and (topic is None or t is topic)
    ]
    if not scores:
        return None
    return sum(scores) / len(scores)


def _question_pairs(rows, axis: Axis, topic: Topic | None = None):
    """Per-question means for each condition, keeping questions with both."""
    by_cell: dict[tuple[str, Mode], list[int]] = defaultdict(list)
    for (_, question_id, t, condition, ax, score) in rows:
        if ax is axis and (topic is None or t is topic):
            by_cell[(question_id, condition)].append(score)
    question_ids = sorted({qid for (qid, _) in by_cell})
    no_rag, rag = [], []
    for qid in question_ids:
        a = by_cell.get((qid, Mode.NO_RAG))
        b = by_cell.get((qid, Mode.RAG))
        if a and b:
            no_rag.append(sum(a) / len(a))
            rag.append(sum(b) / len(b))
    return no_rag, rag


def compare_conditions(
    store: RatingStore,
    axis: Axis,
    plans: list[SessionPlan],
    questions: list[QuestionRecord],
    method: str = "paired_t",
    topic: Topic | None = None,
) -> ComparisonResult:
    """Paired test over per-question mean ratings for one axis."""
    rows = _resolve_ratings(store.latest(), plans, questions)
    no_rag, rag = _question_pairs(rows, axis, topic)
    return compare_paired(no_rag, rag, method=method, axis=axis.value)


def aggregate_ratings(
    store: RatingStore,
    plans: list[SessionPlan],
    questions: list[QuestionRecord],
    method: str = "paired_t",
) -> dict:
    """Per-axis per-condition means with paired p-values, overall and per topic.

    Cells with no ratings are reported as null, never zero. Aggregation is
    a pure reduction over the latest rating per (annotator, item, axis), so
    the on-disk order of the ratings file never affects the result.
    """
    rows = _resolve_ratings(store.latest(), plans, questions)
    if not rows:
        raise ValidationError("no_ratings", "no ratings resolve against the provided session plans")
    topics_present = [t for t in TOPIC_ORDER if any(r[2] is t for r in rows)]
    scopes = []
    for scope_name, topic in [("overall", None)] + [(t.value, t) for t in topics_present]:
        rows_out = []
        for axis in AXES:
            mean_no_rag = _cell_mean(rows, axis, Mode.NO_RAG, topic)
            mean_rag = _cell_mean(rows, axis, Mode.RAG, topic)
            no_rag_pairs, rag_pairs = _question_pairs(rows, axis, topic)
            if len(no_rag_pairs) >= 2:
                cmp_result = compare_paired(no_rag_pairs, rag_pairs, method=method, axis=axis.value).to_json()
            else:
                cmp_result = None
            rows_out.append(
                {
                    "axis": axis.value,
                    "mean_no_rag": mean_no_rag,
                    "mean_rag": mean_rag,
                    "comparison": cmp_result,
                }
            )
        scopes.append({"scope": scope_name, "rows": rows_out})
    return {
        "method": method,
        "rating_count": len(rows),
        "scopes": scopes,
    }


def ratings_report_text(report: dict) -> str:
    """Aligned grid: scope x axis rows, condition means and p-values."""
    headers = ["scope", "axis", "no-RAG", "RAG", "p-value", "test", "pairs"]
    table = []
    for scope in report["scopes"]:
        for row in scope["rows"]:
            fmt = lambda v: "-" if v is None else f"{v:.2f}"
            cmp_result = row["comparison"]
            table.append(
                [
                    scope["scope"],
                    row["axis"],
                    fmt(row["mean_no_rag"]),
                    fmt(row["mean_rag"]),
                    "-" if cmp_result is None else f"{cmp_result['p_value']:.3f}",
                    "-" if cmp_result is None else cmp_result["test_name"],
                    "-" if cmp_result is None else str(cmp_result["n_pairs"]),
                ]
            )
    widths = [max(len(headers[i]), *(len(r[i]) for r in table)) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in table:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def export_ratings_csv(store: RatingStore, path) -> None:
    """Every rating row in append order, superseded entries included."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["annotator_id", "item_id", "axis", "score", "timestamp"])
        for rating in store.all_ratings():
            writer.writerow([rating.annotator_id, rating.item_id, rating.axis.value, rating.score, rating.recorded_at])
