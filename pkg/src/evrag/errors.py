"""Error hierarchy shared across the pipeline.

Every error carries a stable machine-readable ``code`` so the CLI and the
HTTP layer can map failures without string-matching messages.
"""

from __future__ import annotations


class EvragError(Exception):
    """Base class; ``code`` is stable across releases, ``message`` is not."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        self.message = message or code
        super().__init__(self.message)


class ValidationError(EvragError):
    """Bad input or contract violation. CLI exit 1, HTTP 4xx."""


class TransportError(EvragError):
    """Remote provider or network failure, retriable. CLI exit 2, HTTP 502/504."""
