"""Locate trailing reference lists in generated answers and parse AMA citations.

Extraction accepts the headers "References", "Reference", and "Sources"
(case-insensitive, optional colon), either on their own line or followed
inline by the first entry. Entries are enumerated "1.", "1)", or "[1]"
and may wrap across lines; lines are joined until the next enumerator in
sequence. Text before the header is never altered.

Parsing follows the AMA citation grammar: "Authors. Title. Journal.
Year;Volume(Issue):Pages." The authors segment is the prefix before the
first period whose comma-separated tokens all look like "Surname
Initials"; "et al" is recorded as a flag, never expanded into invented
names. Unparseable entries degrade to a partial parse, keeping the raw
text losslessly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import ValidationError

HEADER_WORDS = ("references", "reference", "sources")

_HEADER_LINE_RE = re.compile(
    r"^[ \t]*(?:references?|sources)[ \t]*:?[ \t]*$|^[ \t]*(?:references?|sources)[ \t]*:",
    re.IGNORECASE | re.MULTILINE,
)
_HEADER_INLINE_RE = re.compile(r"\b(?:references?|sources)\s*:\s*(?=\[?1[.)\]])", re.IGNORECASE)
# an entry number opens a line, or follows the end of the previous entry
# (sentence punctuation + whitespace); bare "word 2." inside a title is not
# a boundary
_ENUM_LINE_RE = re.compile(r"^[ \t]*(?:\[(\d{1,3})\]|(\d{1,3})[.)])[ \t]+", re.MULTILINE)
_ENUM_INLINE_RE = re.compile(r"(?<=[.:)])\s+(?:\[(\d{1,3})\]|(\d{1,3})[.)])\s+")

_DOI_URL_RE = re.compile(r"(?:https?://\S+|doi:\s*\S+|\b10\.\d{4,9}/\S+)", re.IGNORECASE)
_INITIALS_RE = re.compile(r"[A-Z]{1,4}")
_SURNAME_WORD_RE = re.compile(r"[^\W\d_]+(?:[-'’][^\W\d_]+)*", re.UNICODE)
_YEAR_BLOCK_RE = re.compile(r"\b((?:1[89]|20)\d{2})\s*;\s*([^.]+?)(?:\.(?!\d)|$)")
_BARE_YEAR_RE = re.compile(r"\b((?:1[89]|20)\d{2})\b")
_TITLE_BOUNDARY_RE = re.compile(r"\.(?!\d)")


@dataclass
class ParsedReference:
    ref_index: int
    raw_text: str
    authors: list[str] = field(default_factory=list)
    et_al: bool = False
    title: str | None = None
    journal_or_source: str | None = None
    year: int | None = None
    volume_issue_pages: str | None = None
    doi_or_url: str | None = None
    status: str = "unparsed"  # parsed | partial | unparsed

    def to_json(self) -> dict:
        return {
            "ref_index": self.ref_index,
            "raw_text": self.raw_text,
            "authors": self.authors,
            "et_al": self.et_al,
            "title": self.title,
            "journal_or_source": self.journal_or_source,
            "year": self.year,
            "volume_issue_pages": self.volume_issue_pages,
            "doi_or_url": self.doi_or_url,
            "status": self.status,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ParsedReference":
        return cls(
            ref_index=int(obj["ref_index"]),
            raw_text=obj["raw_text"],
            authors=list(obj.get("authors", [])),
            et_al=bool(obj.get("et_al", False)),
            title=obj.get("title"),
            journal_or_source=obj.get("journal_or_source"),
            year=obj.get("year"),
            volume_issue_pages=obj.get("volume_issue_pages"),
            doi_or_url=obj.get("doi_or_url"),
            status=obj.get("status", "unparsed"),
        )


@dataclass
class ReferenceBlock:
    found: bool
    entries: list[ParsedReference] = field(default_factory=list)
    unparsed_lines: list[str] = field(default_factory=list)
    prefix_text: str = ""
    block_text: str = ""

    def to_json(self) -> dict:
        return {
            "found": self.found,
            "entries": [e.to_json() for e in self.entries],
            "unparsed_lines": self.unparsed_lines,
        }


def _find_header(answer_text: str):
    """Position of the last plausible references header, or None."""
    candidates = list(_HEADER_LINE_RE.finditer(answer_text))
    candidates.extend(_HEADER_INLINE_RE.finditer(answer_text))
    if not candidates:
        return None
    return max(candidates, key=lambda m: m.start())


def _enumerator_chain(body: str) -> list[tuple[int, int, int]]:
    """(number, start, content_start) for the consecutive enumerator chain.

    Entry numbers must increase by one; enumerator-shaped text inside an
    entry (page numbers, "stage 2." in a title) is skipped because it is
    either not at a boundary or breaks the sequence.
    """
    by_content_start: dict[int, tuple[int, int, int]] = {}
    for pattern in (_ENUM_LINE_RE, _ENUM_INLINE_RE):
        for m in pattern.finditer(body):
            key = m.end()
            candidate = (int(m.group(1) or m.group(2)), m.start(), m.end())
            if key not in by_content_start or candidate[1] < by_content_start[key][1]:
                by_content_start[key] = candidate
    ordered = [by_content_start[key] for key in sorted(by_content_start)]
    if not ordered:
        return []
    start_at = next((i for i, (num, _, _) in enumerate(ordered) if num == 1), 0)
    chain = [ordered[start_at]]
    expected = chain[0][0] + 1
    for num, start, end in ordered[start_at + 1 :]:
        if num == expected:
            chain.append((num, start, end))
            expected += 1
    return chain


def extract_reference_block(answer_text: str) -> ReferenceBlock:
    """Segment the trailing references section of an answer.

    Returns found=False (no entries) when no header is present. The text
    before the header is preserved byte-for-byte in ``prefix_text`` and the
    raw block, header included, in ``block_text``.
    """
    match = _find_header(answer_text or "")
    if match is None:
        return ReferenceBlock(found=False, prefix_text=answer_text or "")
    prefix = answer_text[: match.start()]
    block_text = answer_text[match.start() :]
    body = answer_text[match.end() :]
    chain = _enumerator_chain(body)
    unparsed = []
    if chain:
        head = body[: chain[0][1]]
    else:
        head = body
    unparsed.extend(line.strip() for line in head.splitlines() if line.strip())
    entries = []
    for i, (num, _, content_start) in enumerate(chain):
        content_end = chain[i + 1][1] if i + 1 < len(chain) else len(body)
        text = " ".join(body[content_start:content_end].split())
        if text:
            entries.append(parse_ama_reference(text, num))
    return ReferenceBlock(
        found=True,
        entries=entries,
        unparsed_lines=unparsed,
        prefix_text=prefix,
        block_text=block_text,
    )


def _is_author_token(token: str) -> bool:
    words = token.split()
    if len(words) < 2:
        return False
    if not _INITIALS_RE.fullmatch(words[-1]):
        return False
    if not all(_SURNAME_WORD_RE.fullmatch(w) for w in words[:-1]):
        return False
    return any(w[0].isupper() for w in words[:-1])


def _split_authors(segment: str) -> tuple[list[str], bool] | None:
    """Authors list and et-al flag if every comma token fits the grammar.

    "and" works as a separator alongside commas, and trailing affiliation
    digits on the initials ("Chen Z1") are stripped.
    """
    tokens = [t.strip() for t in re.split(r",|\band\b", segment) if t.strip()]
    if not tokens or ";" in segment or ":" in segment:
        return None
    et_al = False
    authors = []
    for i, token in enumerate(tokens):
        if token.lower() in ("et al", "et al."):
            if i != len(tokens) - 1:
                return None
            et_al = True
            continue
        token = re.sub(r"(?<=[A-Za-z])\d{1,2}$", "", token)
        if not _is_author_token(token):
            return None
        authors.append(token)
    if not authors:
        return None
    return authors, et_al


def _take_authors(work: str) -> tuple[list[str], bool, str]:
    """Scan period boundaries for the first prefix that parses as authors."""
    for match in _TITLE_BOUNDARY_RE.finditer(work):
        candidate = work[: match.start()]
        if len(candidate) > 250:
            break
        parsed = _split_authors(candidate)
        if parsed is not None:
            authors, et_al = parsed
            return authors, et_al, work[match.end() :].lstrip()
    return [], False, work


def parse_ama_reference(raw: str, ref_index: int) -> ParsedReference:
    """Parse one AMA citation into structured fields, degrading gracefully.

    The raw text is always captured losslessly; fields that cannot be
    recognized stay None and the status drops to "partial" or "unparsed".
    """
    if not raw or not raw.strip():
        raise ValidationError("empty_reference", "cannot parse an empty reference entry")
    ref = ParsedReference(ref_index=ref_index, raw_text=raw)
    work = " ".join(raw.split())

    doi_match = _DOI_URL_RE.search(work)
    if doi_match:
        ref.doi_or_url = doi_match.group(0).rstrip(".,;")
        work = _DOI_URL_RE.sub("", work).strip()

    ref.authors, ref.et_al, rest = _take_authors(work)

    title_match = _TITLE_BOUNDARY_RE.search(rest)
    if title_match:
        title = rest[: title_match.start()].strip()
        tail = rest[title_match.end() :].strip()
    else:
        title, tail = rest.strip(), ""
    ref.title = title or None

    year_block = _YEAR_BLOCK_RE.search(tail)
    if year_block:
        ref.year = int(year_block.group(1))
        vip = year_block.group(2).strip().rstrip(".,;")
        ref.volume_issue_pages = vip or None
        source = tail[: year_block.start()]
    else:
        bare = _BARE_YEAR_RE.search(tail)
        if bare:
            ref.year = int(bare.group(1))
        source = tail
    boundary = _TITLE_BOUNDARY_RE.search(source)
    if boundary:
        source = source[: boundary.start()]
    source = source.strip().strip(".,;:")
    if source and _BARE_YEAR_RE.fullmatch(source):
        source = ""
    ref.journal_or_source = source or None

    if ref.title and ref.journal_or_source and ref.year and ref.authors:
        ref.status = "parsed"
    elif ref.title or ref.journal_or_source:
        ref.status = "partial"
    else:
        ref.status = "unparsed"
    return ref


def top_n_references(block: ReferenceBlock, n: int = 3) -> list[ParsedReference]:
    """First min(n, len(entries)) references in source order."""
    if n < 1:
        raise ValidationError("invalid_n", "n must be >= 1")
    return block.entries[:n]


def save_reference_blocks(records: list[dict], path) -> None:
    """Write one JSON object per reference, tagged with its run context."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
