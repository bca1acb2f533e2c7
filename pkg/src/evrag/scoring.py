"""Score a benchmark run: parse citations, classify factuality, measure selection.

For every archived answer the trailing reference list is parsed, the top
N references (default 3) are matched against the catalog, and per-mode
factuality verdicts are accumulated. Retrieval-augmented answers
additionally yield per-question selection statistics against their
archived top-k document hits.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .catalog import Catalog
from .config import PipelineConfig
from .engine import Mode, RunArchive
from .errors import ValidationError
from .factuality import (
    CatalogMatcher,
    FactualityVerdict,
    classify_references,
    factuality_report,
    factuality_report_text,
    report_to_json_bytes,
    save_verdicts,
)
from .refparse import extract_reference_block, save_reference_blocks, top_n_references
from .selection import (
    SelectionAggregate,
    aggregate_selection,
    save_selection,
    selection_report_text,
    selection_stats,
)


@dataclass
class ScoreArtifacts:
    factuality: dict
    selection: SelectionAggregate | None
    verdict_records: list[dict]
    reference_records: list[dict]


def score_archive(archive: RunArchive, catalog: Catalog, config: PipelineConfig | None = None) -> ScoreArtifacts:
    if not archive.results:
        raise ValidationError("empty_archive", "run archive has no results to score")
    config = config or archive.config
    matcher = CatalogMatcher(catalog, threshold=config.title_match_threshold)
    verdicts_by_mode: dict[str, list[FactualityVerdict]] = {}
    verdict_records: list[dict] = []
    reference_records: list[dict] = []
    per_question_stats = []
    for result in archive.results:
        block = extract_reference_block(result.answer_text)
        for entry in block.entries:
            record = entry.to_json()
            record.update({"question_id": result.question_id, "mode": result.mode.value})
            reference_records.append(record)
        scored_refs = top_n_references(block, config.n_top_refs)
        verdicts = classify_references(scored_refs, matcher)
        verdicts_by_mode.setdefault(result.mode.value, []).extend(verdicts)
        for verdict in verdicts:
            verdict_records.append(
                {
                    "question_id": result.question_id,
                    "mode": result.mode.value,
                    "ref_index": verdict.reference.ref_index,
                    "raw_text": verdict.reference.raw_text,
                    "label": verdict.label.value,
                    "title_similarity": verdict.evidence.title_similarity,
                    "field_discrepancies": [d.value for d in verdict.evidence.field_discrepancies],
                    "matched_doc_id": verdict.evidence.matched_doc_id,
                }
            )
        if result.mode is Mode.RAG:
            per_question_stats.append(selection_stats(result, verdicts))
    report = factuality_report(verdicts_by_mode, threshold=config.title_match_threshold)
    selection_agg = None
    if per_question_stats and any(s.defined for s in per_question_stats):
        selection_agg = aggregate_selection(per_question_stats, rank_unit=config.rank_unit)
    return ScoreArtifacts(
        factuality=report,
        selection=selection_agg,
        verdict_records=verdict_records,
        reference_records=reference_records,
    )


def write_score_artifacts(artifacts: ScoreArtifacts, base: str | Path, kinds: list[str]) -> dict[str, Path]:
    """Write report files next to the archive base path; returns written paths."""
    base = Path(base)
    written: dict[str, Path] = {}
    refs_path = Path(f"{base}.refs")
    save_reference_blocks(artifacts.reference_records, refs_path)
    written["refs"] = refs_path
    verdicts_path = Path(f"{base}.verdicts.jsonl")
    save_verdicts(artifacts.verdict_records, verdicts_path)
    written["verdicts"] = verdicts_path
    if "factuality" in kinds:
        path = Path(f"{base}.factuality.json")
        path.write_bytes(report_to_json_bytes(artifacts.factuality))
        Path(f"{base}.factuality.txt").write_text(factuality_report_text(artifacts.factuality), encoding="utf-8")
        written["factuality"] = path
    if "selection" in kinds:
        if artifacts.selection is None:
            raise ValidationError("not_applicable", "no rag-mode results with citations; selection report undefined")
        json_path = Path(f"{base}.selection.json")
        save_selection(artifacts.selection, json_path, Path(f"{base}.selection.jsonl"))
        Path(f"{base}.selection.txt").write_text(selection_report_text(artifacts.selection), encoding="utf-8")
        written["selection"] = json_path
    return written
