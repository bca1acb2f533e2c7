"""How many cited references came from the retrieved top-k, and at what ranks.

A cited reference counts as "from the top k" when its matched catalog
document appears among the document-level hits archived with the answer;
its rank is that hit's rank. The overall selection fraction is
reference-weighted (sum of matches over sum of citations), and rank
statistics are computed over per-question mean ranks by default.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field

from .engine import GenerationResult, Mode
from .errors import ValidationError
from .factuality import FactualityVerdict


@dataclass
class SelectionStats:
    question_id: str
    cited_total: int
    cited_from_topk: int
    matched_ranks: list[int] = field(default_factory=list)

    @property
    def defined(self) -> bool:
        return self.cited_total > 0

    @property
    def selected_fraction(self) -> float | None:
        if not self.defined:
            return None
        return self.cited_from_topk / self.cited_total

    @property
    def mean_rank(self) -> float | None:
        if not self.matched_ranks:
            return None
        return sum(self.matched_ranks) / len(self.matched_ranks)

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "cited_total": self.cited_total,
            "cited_from_topk": self.cited_from_topk,
            "selected_fraction": self.selected_fraction,
            "matched_ranks": self.matched_ranks,
            "mean_rank": self.mean_rank,
            "defined": self.defined,
        }


@dataclass
class SelectionAggregate:
    overall_fraction: float
    mean_rank: float
    rank_sd: float | None
    rank_median: float
    per_question: list[SelectionStats]
    rank_unit: str
    questions_with_matches: int
    questions_defined: int

    def to_json(self) -> dict:
        return {
            "overall_fraction": self.overall_fraction,
            "overall_percent": round(100.0 * self.overall_fraction, 1),
            "mean_rank": self.mean_rank,
            "rank_sd": self.rank_sd,
            "rank_median": self.rank_median,
            "rank_unit": self.rank_unit,
            "questions_with_matches": self.questions_with_matches,
            "questions_defined": self.questions_defined,
            "per_question": [s.to_json() for s in self.per_question],
        }


def selection_stats(result: GenerationResult, verdicts: list[FactualityVerdict]) -> SelectionStats:
    """Per-question selection stats for one retrieval-augmented answer.

    ``verdicts`` must be the factuality verdicts of this answer's cited
    references; matching against the top-k window uses the archived
    document hits, so the computation is replayable from the run archive.
    """
    if result.mode is not Mode.RAG:
        raise ValidationError("not_applicable", "selection stats are defined only for rag-mode results")
    rank_by_doc = {hit.doc_id: hit.rank for hit in result.hits_used}
    matched_ranks = []
    for verdict in verdicts:
        doc_id = verdict.evidence.matched_doc_id
        if doc_id is not None and doc_id in rank_by_doc:
            matched_ranks.append(rank_by_doc[doc_id])
    return SelectionStats(
        question_id=result.question_id,
        cited_total=len(verdicts),
        cited_from_topk=len(matched_ranks),
        matched_ranks=matched_ranks,
    )


def aggregate_selection(stats: list[SelectionStats], rank_unit: str = "question_mean") -> SelectionAggregate:
    """Reference-weighted overall fraction plus rank statistics.

    Rank statistics default to the per-question-mean unit: each question
    contributes its mean matched rank once. ``rank_unit="pooled"`` switches
    to pooling every matched rank. Questions with no citations are
    excluded from all statistics and reported via the coverage counters.
    """
    if not stats:
        raise ValidationError("no_stats", "aggregate requires at least one per-question entry")
    if rank_unit not in ("question_mean", "pooled"):
        raise ValidationError("invalid_rank_unit", f"unknown rank unit {rank_unit!r}")
    defined = [s for s in stats if s.defined]
    if not defined:
        raise ValidationError("all_undefined", "no question has any cited reference")
    cited_total = sum(s.cited_total for s in defined)
    cited_matched = sum(s.cited_from_topk for s in defined)
    overall_fraction = cited_matched / cited_total
    with_matches = [s for s in defined if s.matched_ranks]
    if rank_unit == "question_mean":
        values = [s.mean_rank for s in with_matches]
    else:
        values = [float(r) for s in with_matches for r in s.matched_ranks]
    if values:
        mean = sum(values) / len(values)
        sd = statistics.stdev(values) if len(values) > 1 else None
        median = statistics.median(values)
    else:
        mean, sd, median = math.nan, None, math.nan
    return SelectionAggregate(
        overall_fraction=overall_fraction,
        mean_rank=mean,
        rank_sd=sd,
        rank_median=median,
        per_question=list(stats),
        rank_unit=rank_unit,
        questions_with_matches=len(with_matches),
        questions_defined=len(defined),
    )


def selection_report_text(agg: SelectionAggregate) -> str:
    """Headline numbers: fraction, mean rank with spread, median rank."""
    sd = f"{agg.rank_sd:.2f}" if agg.rank_sd is not None else "n/a"
    lines = [
        f"selected fraction: {100.0 * agg.overall_fraction:.1f}%",
        f"mean rank: {agg.mean_rank:.2f} (sd {sd})",
        f"median rank: {agg.rank_median:.2f}",
        f"rank unit: {agg.rank_unit}",
        f"questions: {agg.questions_defined} with citations, {agg.questions_with_matches} with matches",
    ]
    return "\n".join(lines) + "\n"


def save_selection(agg: SelectionAggregate, json_path, jsonl_path) -> None:
    payload = agg.to_json()
    per_question = payload.pop("per_question")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for stats in per_question:
            fh.write(json.dumps(stats, sort_keys=True) + "\n")
