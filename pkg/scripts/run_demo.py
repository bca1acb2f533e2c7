#!/usr/bin/env python3
"""Drive the whole pipeline end-to-end on the synthetic demo data.

ingest -> index -> run (both conditions, mock LLM) -> score -> session,
leaving every artifact under the demo directory. Run make_demo_data.py
first, or let this script do it.

Usage:
    python scripts/run_demo.py [--dir demo_data]
"""

import argparse
import subprocess
import sys
from pathlib import Path

from evrag.cli import main as evrag_main


def step(argv: list[str]) -> None:
    print(f"\n$ evrag {' '.join(argv)}")
    code = evrag_main(argv)
    if code != 0:
        print(f"step failed with exit code {code}", file=sys.stderr)
        raise SystemExit(code)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", default="demo_data")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    root = Path(args.dir)
    if not (root / "corpus.jsonl").exists():
        subprocess.run(
            [sys.executable, str(Path(__file__).parent / "make_demo_data.py"), "--out", str(root)],
            check=True,
        )

    catalog = root / "catalog"
    index = root / "index.bin"
    archive = root / "runs" / "demo"
    step(["ingest", str(root / "corpus.jsonl"), "--out", str(catalog)])
    step(["index", "--catalog", str(catalog), "--out", str(index), "--provider", "local", "--dims", "64"])
    step([
        "run",
        "--questions", str(root / "questions.jsonl"),
        "--modes", "rag,no_rag",
        "--provider", "mock",
        "--transcripts", str(root / "transcripts.json"),
        "--index", str(index),
        "--catalog", str(catalog),
        "--out", str(archive),
        "--run-id", "demo",
    ])
    step(["score", "--archive", str(archive), "--catalog", str(catalog)])
    step([
        "--seed", str(args.seed),
        "session", "new",
        "--archive", str(archive),
        "--questions", str(root / "questions.jsonl"),
        "--annotator", "annotator1",
        "--session-id", "demo-session",
        "--out", str(root / "sessions" / "demo-session.json"),
    ])
    step(["session", "export", "--plan", str(root / "sessions" / "demo-session.json"),
          "--out", str(root / "rater_view.json")])

    print("\ndemo complete; inspect:")
    for artifact in ("catalog/manifest.json", "runs/demo.factuality.txt", "runs/demo.selection.txt",
                     "sessions/demo-session.json", "rater_view.json"):
        print(f"  {root / artifact}")
    print(f"\nserve the annotation API with:\n  evrag serve --data-dir {root} "
          f"--token-file {root / 'tokens.json'} --transcripts {root / 'transcripts.json'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
