#!/usr/bin/env python3
"""Generate a synthetic demo corpus, question set, and mock transcripts.

The corpus is vocabulary-controlled: question i shares its token family
with journal document i, so retrieval puts that document at rank 1 and
the scripted answers cite a mix of exact, year-perturbed, and fabricated
references. Everything is deterministic.

Usage:
    python scripts/make_demo_data.py --out demo_data [--n-questions 5]
"""

import argparse
import json
from pathlib import Path

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
TOPICS = ["retina", "glaucoma", "cataract", "dry_eye", "uveitis"]
TISSUES = [
    "macular", "corneal", "scleral", "retinal", "choroidal", "ciliary", "foveal", "limbal",
    "vitreous", "uveal", "trabecular", "zonular", "papillary", "orbital", "palpebral", "lacrimal",
]
PROCEDURES = [
    "photocoagulation", "trabeculectomy", "phacoemulsification", "vitrectomy", "keratoplasty",
    "iridotomy", "sclerostomy", "cyclophotocoagulation",
]
SURNAMES = ["Alvarez", "Bhatt", "Chen", "Dimitrov", "Eng", "Fontaine", "Garza", "Huang", "Ibrahim", "Jansen"]


def title(i: int) -> str:
    return (
        f"Long-term {TISSUES[i % len(TISSUES)]} and {TISSUES[(i * 7 + 3) % len(TISSUES)]} outcomes "
        f"after {PROCEDURES[i % len(PROCEDURES)]} in adults cohort {i}"
    )


def authors(i: int) -> list[str]:
    return [f"{SURNAMES[(i + j * 3) % len(SURNAMES)]} {'ABC'[j]}{'MNPRST'[(i + j) % 6]}" for j in range(3)]


def body(i: int) -> str:
    return " ".join([f"topic{i}sign", f"topic{i}lesion", f"topic{i}vessel", f"topic{i}layer"] * 6)


def journal_record(i: int) -> dict:
    return {
        "type": "journal_abstract",
        "title": title(i),
        "authors": authors(i),
        "venue": JOURNALS[i % len(JOURNALS)],
        "year": 1995 + (i % 28),
        "doi": f"10.1000/demo.{i:04d}",
        "body": body(i),
    }


def citation(i: int, year_offset: int = 0) -> str:
    record = journal_record(i)
    names = ", ".join(record["authors"])
    return f"{names}. {record['title']}. {record['venue']}. {record['year'] + year_offset};{10 + i}(2):101-109."


def fabricated(i: int) -> str:
    return (
        f"Zorblatt QX, Hixwold PR. Flumtrazine qoxilade brenzofibrate wuxelor study {i}. "
        f"Journal of Implausible Results. {2001 + i};{i + 1}(1):1-9."
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_data", help="output directory")
    parser.add_argument("--n-questions", type=int, default=5)
    parser.add_argument("--n-journal", type=int, default=12)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    n_journal = max(args.n_journal, args.n_questions + 1)
    with open(out / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for i in range(n_journal):
            fh.write(json.dumps(journal_record(i), sort_keys=True) + "\n")
        fh.write(
            json.dumps(
                {
                    "type": "practice_pattern_page",
                    "venue": "Primary Open-Angle Glaucoma Preferred Practice Pattern",
                    "pages": [f"guidance{p} recommendation{p} screening{p}" for p in range(3)],
                },
                sort_keys=True,
            )
            + "\n"
        )
        for i in range(3):
            fh.write(
                json.dumps(
                    {
                        "type": "wiki_article",
                        "title": f"Overview of entity {chr(65 + i)}",
                        "body": f"wikientry{i}a wikientry{i}b wikientry{i}c " * 4,
                        "url": f"https://eyewiki.example/entity{i}",
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    questions = [
        {
            "question_id": f"q{i:03d}",
            "topic": TOPICS[i % len(TOPICS)],
            "text": " ".join([f"topic{i}sign", f"topic{i}lesion", f"topic{i}vessel", f"topic{i}layer"])
            + " what should a patient expect",
        }
        for i in range(args.n_questions)
    ]
    with open(out / "questions.jsonl", "w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(json.dumps(q, sort_keys=True) + "\n")

    transcripts = {}
    for i, q in enumerate(questions):
        prose = (
            f"Patients asking about item {i} should seek a dilated examination. "
            "Management depends on severity and follow-up intervals."
        )
        other = (i + 1) % len(questions)
        transcripts[f"{q['question_id']}/rag"] = (
            f"{prose}\n\nReferences:\n1. {citation(i)}\n2. {citation(other, 1)}\n3. {fabricated(i)}\n"
        )
        transcripts[f"{q['question_id']}/no_rag"] = (
            f"{prose} Earlier reports reached mixed conclusions.\n\nReferences:\n"
            f"1. {citation(i, 2)}\n2. {fabricated(i + 50)}\n"
        )
    with open(out / "transcripts.json", "w", encoding="utf-8") as fh:
        json.dump(transcripts, fh, indent=2, sort_keys=True)
        fh.write("\n")

    with open(out / "tokens.json", "w", encoding="utf-8") as fh:
        json.dump({f"annotator{i}": f"demo-token-{i}" for i in range(1, 4)}, fh, indent=2)
        fh.write("\n")

    print(f"demo data written to {out}/")
    print(f"  corpus.jsonl      {n_journal} abstracts + 1 guideline + 3 wiki pages")
    print(f"  questions.jsonl   {len(questions)} questions")
    print(f"  transcripts.json  {len(transcripts)} scripted answers")
    print(f"  tokens.json       3 annotator tokens")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
