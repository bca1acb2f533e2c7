"""evrag: retrieval-augmented generation pipeline with an evidence-evaluation stack.

Corpus ingestion and chunking, exact dense retrieval, pluggable LLM
providers, AMA citation parsing, reference factuality classification,
retrieval-selection metrics, and blinded human-rating sessions with
paired statistics.
"""

__version__ = "0.1.0"

from .catalog import Catalog, Document, Snippet, SourceKind, chunk_document, count_tokens
from .config import PipelineConfig
from .embeddings import EmbeddingProviderSpec, LocalHashEmbedder, RemoteEmbedder, cosine_similarity
from .engine import Mode, QuestionRecord, Topic, answer_question, build_prompt, run_benchmark
from .errors import EvragError, TransportError, ValidationError
from .factuality import CatalogMatcher, FactualityLabel, classify_reference, factuality_report, normalize_title
from .index import RetrievalHit, build_index, dedupe_to_documents, load_index, retrieve_top_k, save_index
from .refparse import ParsedReference, ReferenceBlock, extract_reference_block, parse_ama_reference, top_n_references
from .selection import SelectionStats, aggregate_selection, selection_stats
from .stats import ComparisonResult, compare_paired

__all__ = [name for name in dir() if not name.startswith("_")]
