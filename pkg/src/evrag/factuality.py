"""Match cited references against the corpus catalog and classify factuality.

Each parsed reference is compared to every catalog entry by normalized
title similarity: an equal-weight blend of token-set Jaccard and
normalized Levenshtein similarity. A reference whose best similarity
clears the existence threshold (default 0.85) is "real"; its metadata
fields are then checked one by one. The three labels are:

    Correct      matched and every checked field agrees
    MinorError   matched but at least one metadata field disagrees
    Hallucinated no catalog entry clears the threshold

Guideline and wiki sources are matched on both their title and their
venue with the same threshold, since citations to them usually quote the
collection name rather than a per-page title. The threshold is a config
value and is surfaced in reports.
"""

from __future__ import annotations

import enum
import json
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .catalog import Catalog, Document, SourceKind
from .errors import ValidationError
from .refparse import ParsedReference

DEFAULT_TITLE_MATCH_THRESHOLD = 0.85

_DOI_RE = re.compile(r"10\.\d{4,9}/\S+")


class Discrepancy(str, enum.Enum):
    YEAR = "year_mismatch"
    VENUE = "venue_mismatch"
    AUTHOR = "author_mismatch"
    VOLUME_PAGES = "volume_pages_mismatch"
    DOI = "doi_mismatch"


class FactualityLabel(str, enum.Enum):
    CORRECT = "Correct"
    MINOR_ERROR = "MinorError"
    HALLUCINATED = "Hallucinated"


@dataclass
class MatchEvidence:
    matched_doc_id: str | None
    title_similarity: float
    field_discrepancies: list[Discrepancy] = field(default_factory=list)
    # unmatched locally but resolved by the optional external lookup;
    # reported in its own bucket, never merged into the three labels
    out_of_corpus: bool = False

    def to_json(self) -> dict:
        return {
            "matched_doc_id": self.matched_doc_id,
            "title_similarity": self.title_similarity,
            "field_discrepancies": [d.value for d in self.field_discrepancies],
            "out_of_corpus": self.out_of_corpus,
        }


@dataclass
class FactualityVerdict:
    reference: ParsedReference
    evidence: MatchEvidence
    label: FactualityLabel

    def to_json(self) -> dict:
        return {
            "label": self.label.value,
            "reference": self.reference.to_json(),
            "evidence": self.evidence.to_json(),
        }


def normalize_title(title: str) -> str:
    """Lowercase, fold diacritics, strip punctuation, collapse whitespace."""
    decomposed = unicodedata.normalize("NFKD", title or "")
    chars = []
    for c in decomposed:
        cat = unicodedata.category(c)
        if cat.startswith("M"):
            continue
        if cat.startswith(("P", "S")):
            chars.append(" ")
        else:
            chars.append(c)
    return " ".join("".join(chars).lower().split())


def load_venue_abbreviations() -> dict[str, str]:
    """Journal abbreviation table (AMA short form -> full name), normalized."""
    text = resources.files("evrag.data").joinpath("journal_abbreviations.json").read_text("utf-8")
    table = json.loads(text)
    return {normalize_title(abbr): normalize_title(full) for abbr, full in table.items()}


def levenshtein_batch(query: str, targets: list[str]) -> np.ndarray:
    """Exact Levenshtein distance from ``query`` to every target string.

    Row-DP over the query with the whole target batch vectorized; the
    insertion recurrence is resolved with a prefix-minimum transform.
    """
    if not targets:
        return np.zeros(0, dtype=np.int32)
    lens = np.array([len(t) for t in targets], dtype=np.int64)
    width = int(lens.max())
    if not query:
        return lens.astype(np.int32)
    padded = np.zeros((len(targets), width), dtype=np.uint32)
    for i, t in enumerate(targets):
        if t:
            padded[i, : len(t)] = np.frombuffer(t.encode("utf-32-le"), dtype=np.uint32)
    offsets = np.arange(width + 1, dtype=np.int32)
    prev = np.broadcast_to(offsets, (len(targets), width + 1)).copy()
    for i, ch in enumerate(query, start=1):
        substitute = prev[:, :-1] + (padded != ord(ch))
        delete = prev[:, 1:] + 1
        best = np.minimum(substitute, delete)
        shifted = np.concatenate(
            [np.full((len(targets), 1), i, dtype=np.int32), best - offsets[1:]], axis=1
        )
        prev = np.minimum.accumulate(shifted, axis=1) + offsets
    return prev[np.arange(len(targets)), lens].astype(np.int32)


def edit_similarity(a: str, b: str) -> float:
    """1 - levenshtein/max(len); 1.0 when both strings are empty."""
    if a == b:
        return 1.0
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - float(levenshtein_batch(a, [b])[0]) / longest


def token_jaccard(a: str, b: str) -> float:
    sa, sb = set(a.split()), set(b.split())
    if not sa and not sb:
        return 1.0
    union = len(sa | sb)
    return len(sa & sb) / union if union else 0.0


def blended_similarity(a: str, b: str) -> float:
    """Equal-weight blend of token-set Jaccard and edit similarity."""
    return 0.5 * token_jaccard(a, b) + 0.5 * edit_similarity(a, b)


class CatalogMatcher:
    """Reusable matcher over an immutable catalog.

    Precomputes normalized match targets (title per document, plus venue
    for guideline/wiki documents) so per-reference matching is a dict hit
    in the exact case and one vectorized scan otherwise.
    """

    def __init__(
        self,
        catalog: Catalog,
        threshold: float = DEFAULT_TITLE_MATCH_THRESHOLD,
        abbreviations: dict[str, str] | None = None,
        external_resolver=None,
    ):
        if len(catalog) == 0:
            raise ValidationError("empty_catalog", "cannot match references against an empty catalog")
        self.catalog = catalog
        self.threshold = threshold
        self.abbreviations = load_venue_abbreviations() if abbreviations is None else abbreviations
        # optional callable(ParsedReference) -> bool checking a bibliographic
        # source beyond the local catalog; disabled by default
        self.external_resolver = external_resolver
        self._targets: list[str] = []
        self._target_tokens: list[set[str]] = []
        self._target_doc: list[Document] = []
        self._exact: dict[str, Document] = {}
        for doc in catalog.documents:
            targets = [normalize_title(doc.title)]
            if doc.source_kind is not SourceKind.JOURNAL_ABSTRACT:
                targets.append(normalize_title(doc.venue))
            for norm in targets:
                if not norm:
                    continue
                self._targets.append(norm)
                self._target_tokens.append(set(norm.split()))
                self._target_doc.append(doc)
                current = self._exact.get(norm)
                if current is None or doc.doc_id < current.doc_id:
                    self._exact[norm] = doc

    def match(self, ref: ParsedReference) -> MatchEvidence:
        query = normalize_title(ref.title or ref.journal_or_source or "")
        if not query:
            return MatchEvidence(matched_doc_id=None, title_similarity=0.0)
        exact = self._exact.get(query)
        if exact is not None:
            return self._evidence(ref, exact, 1.0)
        query_tokens = set(query.split())
        distances = levenshtein_batch(query, self._targets)
        best_doc: Document | None = None
        best_sim = -1.0
        for i, target in enumerate(self._targets):
            union = len(query_tokens | self._target_tokens[i])
            jac = len(query_tokens & self._target_tokens[i]) / union if union else 1.0
            longest = max(len(query), len(target))
            edit = 1.0 - distances[i] / longest if longest else 1.0
            sim = 0.5 * jac + 0.5 * edit
            doc = self._target_doc[i]
            if sim > best_sim or (sim == best_sim and best_doc is not None and doc.doc_id < best_doc.doc_id):
                best_sim = sim
                best_doc = doc
        if best_doc is None or best_sim < self.threshold:
            evidence = MatchEvidence(matched_doc_id=None, title_similarity=max(best_sim, 0.0))
            if self.external_resolver is not None and self.external_resolver(ref):
                evidence.out_of_corpus = True
            return evidence
        return self._evidence(ref, best_doc, best_sim)

    def _evidence(self, ref: ParsedReference, doc: Document, sim: float) -> MatchEvidence:
        discrepancies: list[Discrepancy] = []
        if ref.year is not None and ref.year != doc.year:
            discrepancies.append(Discrepancy.YEAR)
        if ref.journal_or_source is not None and not self._venue_equal(ref.journal_or_source, doc):
            discrepancies.append(Discrepancy.VENUE)
        if ref.authors and doc.authors:
            if _first_surname(ref.authors[0]) != _first_surname(doc.authors[0]):
                discrepancies.append(Discrepancy.AUTHOR)
        # volume/issue/pages are not cataloged for abstracts, so that check
        # only fires when both sides carry a value
        ref_doi = _extract_doi(ref.doi_or_url)
        if ref_doi and doc.doi:
            if ref_doi.lower() != doc.doi.strip().lower():
                discrepancies.append(Discrepancy.DOI)
        return MatchEvidence(matched_doc_id=doc.doc_id, title_similarity=sim, field_discrepancies=discrepancies)

    def _venue_equal(self, cited: str, doc: Document) -> bool:
        a = normalize_title(cited)
        b = normalize_title(doc.venue)
        expand = lambda v: self.abbreviations.get(v, v)
        if expand(a) == expand(b) or a == b:
            return True
        # guideline/wiki citations often name the page title as the source
        if doc.source_kind is not SourceKind.JOURNAL_ABSTRACT:
            return expand(a) == normalize_title(doc.title)
        return False


def _first_surname(author: str) -> str:
    words = author.split()
    if len(words) >= 2 and re.fullmatch(r"[A-Z]{1,4}", words[-1]):
        words = words[:-1]
    return normalize_title(" ".join(words))


def _extract_doi(value: str | None) -> str | None:
    if not value:
        return None
    match = _DOI_RE.search(value)
    return match.group(0).rstrip(".,;") if match else None


def match_reference(
    ref: ParsedReference,
    catalog: Catalog,
    threshold: float = DEFAULT_TITLE_MATCH_THRESHOLD,
    matcher: CatalogMatcher | None = None,
) -> MatchEvidence:
    """One-shot matching; build a CatalogMatcher yourself for batch work."""
    matcher = matcher or CatalogMatcher(catalog, threshold=threshold)
    return matcher.match(ref)


def classify_reference(evidence: MatchEvidence) -> FactualityLabel:
    if evidence.matched_doc_id is None:
        return FactualityLabel.HALLUCINATED
    if evidence.field_discrepancies:
        return FactualityLabel.MINOR_ERROR
    return FactualityLabel.CORRECT


def classify_references(
    refs: list[ParsedReference], matcher: CatalogMatcher
) -> list[FactualityVerdict]:
    verdicts = []
    for ref in refs:
        evidence = matcher.match(ref)
        verdicts.append(FactualityVerdict(ref, evidence, classify_reference(evidence)))
    return verdicts


LABEL_ORDER = [FactualityLabel.CORRECT, FactualityLabel.MINOR_ERROR, FactualityLabel.HALLUCINATED]


def _bucket(verdict_labels: list[FactualityLabel]) -> dict:
    total = len(verdict_labels)
    counts = {label.value: 0 for label in LABEL_ORDER}
    for label in verdict_labels:
        counts[label.value] += 1
    if total:
        percentages = {k: round(100.0 * v / total, 1) for k, v in counts.items()}
        flags = []
    else:
        percentages = {k: None for k in counts}
        flags = ["undefined_percentages"]
    return {"total": total, "counts": counts, "percentages": percentages, "flags": flags}


def factuality_report(verdicts_by_mode: dict[str, list[FactualityVerdict]], threshold: float | None = None) -> dict:
    """Counts and one-decimal percentages per label, overall and per mode.

    Percentages are recomputed from the counts, never accumulated
    independently, so the report always reconciles with itself.
    """
    all_labels = [v.label for labels in verdicts_by_mode.values() for v in labels]
    report = _bucket(all_labels)
    report["modes"] = {mode: _bucket([v.label for v in verdicts]) for mode, verdicts in sorted(verdicts_by_mode.items())}
    if threshold is not None:
        report["title_match_threshold"] = threshold
    return report


def report_to_json_bytes(report: dict) -> bytes:
    return (json.dumps(report, indent=2, sort_keys=True) + "\n").encode("utf-8")


def factuality_report_text(report: dict) -> str:
    """Aligned-column table over the three factuality categories."""
    modes = sorted(report.get("modes", {}))
    headers = ["category"] + [f"{m} n" for m in modes] + [f"{m} %" for m in modes] + ["overall n", "overall %"]
    rows = []
    for label in LABEL_ORDER:
        row = [label.value]
        for m in modes:
            row.append(str(report["modes"][m]["counts"][label.value]))
        for m in modes:
            pct = report["modes"][m]["percentages"][label.value]
            row.append("-" if pct is None else f"{pct:.1f}")
        row.append(str(report["counts"][label.value]))
        pct = report["percentages"][label.value]
        row.append("-" if pct is None else f"{pct:.1f}")
        rows.append(row)
    totals = ["total"] + [str(report["modes"][m]["total"]) for m in modes] + ["" for _ in modes] + [str(report["total"]), ""]
    rows.append(totals)
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def save_verdicts(records: list[dict], path) -> None:
    """One JSON object per line per reference verdict."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
