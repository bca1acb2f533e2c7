"""Tokenization behind the snippet budget.

The chunk budget is defined in tokens, so token counting must be
deterministic and offline. The default tokenizer splits on Unicode
whitespace and joins with single spaces; a model-specific subword
tokenizer can be substituted as long as it implements the same protocol.
"""

from __future__ import annotations

from typing import Protocol


class Tokenizer(Protocol):
    """Unit of counting and splitting for document chunking.

    ``tokenize`` returns atomic split units; ``cost`` is how many budget
    tokens one unit consumes (1 for word tokenizers, >1 possible for
    subword schemes); ``detokenize`` reassembles units into text.
    """

    name: str

    def tokenize(self, text: str) -> list[str]: ...

    def detokenize(self, tokens: list[str]) -> str: ...

    def cost(self, token: str) -> int: ...


class WhitespaceTokenizer:
    """Unicode-whitespace word tokenizer. Each word costs one token."""

    name = "whitespace"

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def detokenize(self, tokens: list[str]) -> str:
        return " ".join(tokens)

    def cost(self, token: str) -> int:
        return 1


DEFAULT_TOKENIZER = WhitespaceTokenizer()

_REGISTRY: dict[str, Tokenizer] = {"whitespace": DEFAULT_TOKENIZER}


def get_tokenizer(name: str) -> Tokenizer:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown tokenizer {name!r}; registered: {sorted(_REGISTRY)}")


def register_tokenizer(tokenizer: Tokenizer) -> None:
    _REGISTRY[tokenizer.name] = tokenizer


def count_tokens(text: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> int:
    """Total token cost of ``text``; the empty string counts as 0."""
    if not text:
        return 0
    return sum(tokenizer.cost(t) for t in tokenizer.tokenize(text))
