"""Shared synthetic fixtures: corpora, questions, and scripted transcripts.

Everything is seeded and vocabulary-controlled so retrieval targets are
known by construction: question i uses the same token family as journal
document i, which therefore ranks first for it under the hash embedder.
Mock answers avoid the literal condition tokens so blinding scans stay
meaningful.
"""

from __future__ import annotations

import json
import random

import pytest

from evrag.catalog import (
    Catalog,
    ingest_guideline_pages,
    ingest_journal_abstracts,
    ingest_wiki_articles,
)
from evrag.engine import Mode, QuestionRecord, Topic

JOURNALS = [
    "Ophthalmology",
    "JAMA Ophthalmology",
    "American Journal of Ophthalmology",
    "British Journal of Ophthalmology",
    "Retina",
    "Journal of Cataract and Refractive Surgery",
    "Survey of Ophthalmology",
    "Journal of Glaucoma",
]

TOPICS = [Topic.RETINA, Topic.GLAUCOMA, Topic.CATARACT, Topic.DRY_EYE, Topic.UVEITIS]

_TITLE_WORDS = [
    "macular", "corneal", "scleral", "retinal", "choroidal", "ciliary", "foveal", "limbal",
    "vitreous", "uveal", "trabecular", "zonular", "papillary", "orbital", "palpebral", "lacrimal",
    "episcleral", "iridial", "conjunctival", "tarsal", "canalicular", "optic", "lenticular", "hyaloid",
    "pupillary", "subretinal", "epiretinal", "perifoveal", "juxtapapillary", "peripapillary",
]
_PROCEDURES = [
    "photocoagulation", "trabeculectomy", "phacoemulsification", "vitrectomy", "keratoplasty",
    "iridotomy", "sclerostomy", "cyclophotocoagulation", "tarsorrhaphy", "dacryocystorhinostomy",
    "capsulotomy", "goniotomy", "pneumatic retinopexy", "cross-linking", "buckling",
]
_SURNAMES = [
    "Alvarez", "Bhatt", "Chen", "Dimitrov", "Eng", "Fontaine", "Garza", "Huang", "Ibrahim",
    "Jansen", "Kovacs", "Lindqvist", "Moreau", "Novak", "Okafor", "Petrov", "Quinn", "Rossi",
    "Sato", "Tanaka", "Ueda", "Varga", "Wong", "Xu", "Yilmaz", "Zhang",
]


def journal_title(i: int) -> str:
    w1 = _TITLE_WORDS[i % len(_TITLE_WORDS)]
    w2 = _TITLE_WORDS[(i * 7 + 3) % len(_TITLE_WORDS)]
    proc = _PROCEDURES[i % len(_PROCEDURES)]
    return f"Long-term {w1} and {w2} outcomes after {proc} in adults cohort {i}"


def journal_authors(i: int, n: int = 3) -> list[str]:
    return [f"{_SURNAMES[(i + j * 5) % len(_SURNAMES)]} {'ABCDEFG'[j]}{'MNPRST'[(i + j) % 6]}" for j in range(n)]


def doc_vocab(i: int) -> list[str]:
    return [f"topic{i}sign", f"topic{i}lesion", f"topic{i}vessel", f"topic{i}layer"]


def journal_body(i: int, repeats: int = 6) -> str:
    words = doc_vocab(i) * repeats
    return " ".join(words)


def make_journal_records(n: int) -> list[dict]:
    return [
        {
            "type": "journal_abstract",
            "title": journal_title(i),
            "authors": journal_authors(i),
            "venue": JOURNALS[i % len(JOURNALS)],
            "year": 1995 + (i % 28),
            "doi": f"10.1000/evj.{1995 + (i % 28)}.{i:04d}",
            "body": journal_body(i),
        }
        for i in range(n)
    ]


def make_catalog(n_journal: int = 12, n_guideline_pages: int = 3, n_wiki: int = 3) -> Catalog:
    catalog = Catalog()
    docs, rej = ingest_journal_abstracts(make_journal_records(n_journal))
    catalog.extend(docs, rej)
    if n_guideline_pages:
        pages = [f"guidance{p} recommendation{p} screening{p} section{p}" for p in range(n_guideline_pages)]
        docs, rej = ingest_guideline_pages("Primary Open-Angle Glaucoma Preferred Practice Pattern", pages)
        catalog.extend(docs, rej)
    if n_wiki:
        pages = [
            {
                "title": f"Overview of entity {chr(65 + i)}",
                "body": f"wikientry{i}a wikientry{i}b wikientry{i}c " * 4,
                "url": f"https://eyewiki.example/entity{i}",
            }
            for i in range(n_wiki)
        ]
        docs, rej = ingest_wiki_articles(pages)
        catalog.extend(docs, rej)
    return catalog


def make_questions(n: int = 5) -> list[QuestionRecord]:
    return [
        QuestionRecord(
            question_id=f"q{i:03d}",
            topic=TOPICS[i % len(TOPICS)],
            text=" ".join(doc_vocab(i)) + " what should a patient expect",
        )
        for i in range(n)
    ]


def ama_citation(catalog: Catalog, doc_index: int, year_offset: int = 0) -> str:
    doc = catalog.documents[doc_index]
    authors = ", ".join(doc.authors[:3]) if doc.authors else ""
    year = (doc.year or 2020) + year_offset
    if authors:
        return f"{authors}. {doc.title}. {doc.venue}. {year};{10 + doc_index}(2):101-109."
    return f"{doc.title}. {doc.venue}. {year}."


def fabricated_citation(i: int) -> str:
    return (
        f"Zorblatt QX, Hixwold PR. Flumtrazine qoxilade brenzofibrate wuxelor study {i}. "
        f"Journal of Implausible Results. {2001 + i};{i + 1}(1):1-9."
    )


def make_transcripts(questions: list[QuestionRecord], catalog: Catalog) -> dict[str, str]:
    """Scripted answers: retrieval-mode answers cite the question's target
    document plus a year-perturbed and a fabricated reference; plain-mode
    answers cite perturbed and fabricated ones only."""
    transcripts = {}
    for i, q in enumerate(questions):
        body = (
            f"Patients asking about item {i} should seek a dilated examination. "
            "Management depends on severity and follow-up intervals."
        )
        other = (i + 1) % len(questions)
        rag_answer = (
            f"{body}\n\nReferences:\n"
            f"1. {ama_citation(catalog, i)}\n"
            f"2. {ama_citation(catalog, other, year_offset=1)}\n"
            f"3. {fabricated_citation(i)}\n"
        )
        no_rag_answer = (
            f"{body} Earlier reports reached mixed conclusions.\n\nReferences:\n"
            f"1. {ama_citation(catalog, i, year_offset=2)}\n"
            f"2. {fabricated_citation(i + 50)}\n"
        )
        transcripts[f"{q.question_id}/rag"] = rag_answer
        transcripts[f"{q.question_id}/no_rag"] = no_rag_answer
    return transcripts


def write_corpus_jsonl(path, n_journal: int = 12, n_guideline_pages: int = 3, n_wiki: int = 3) -> None:
    records = make_journal_records(n_journal)
    records.append(
        {
            "type": "practice_pattern_page",
            "venue": "Primary Open-Angle Glaucoma Preferred Practice Pattern",
            "pages": [f"guidance{p} recommendation{p} screening{p} section{p}" for p in range(n_guideline_pages)],
        }
    )
    records.extend(
        {
            "type": "wiki_article",
            "title": f"Overview of entity {chr(65 + i)}",
            "body": f"wikientry{i}a wikientry{i}b wikientry{i}c " * 4,
            "url": f"https://eyewiki.example/entity{i}",
        }
        for i in range(n_wiki)
    )
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_questions_jsonl(path, questions: list[QuestionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(json.dumps(q.to_json(), sort_keys=True) + "\n")


@pytest.fixture
def small_catalog() -> Catalog:
    return make_catalog()


@pytest.fixture
def questions() -> list[QuestionRecord]:
    return make_questions()


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240405)
