"""Pipeline configuration and the key/value config-file loader."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

DEFAULT_SEED = 1337
DATA_DIR_ENV = "EVR_DATA_DIR"


@dataclass
class PipelineConfig:
    k_docs: int = 10
    n_top_refs: int = 3
    max_snippet_tokens: int = 1024
    temperature: float = 0.0
    rating_min: int = 1
    rating_max: int = 5
    title_match_threshold: float = 0.85
    rank_unit: str = "question_mean"  # or "pooled"

    def __post_init__(self):
        for name in ("k_docs", "n_top_refs", "max_snippet_tokens"):
            if getattr(self, name) < 1:
                raise ValidationError("invalid_config", f"{name} must be positive")
        if (self.rating_min, self.rating_max) != (1, 5):
            raise ValidationError("invalid_config", "rating scale is fixed at 1..5")
        if self.rank_unit not in ("question_mean", "pooled"):
            raise ValidationError("invalid_config", f"unknown rank_unit {self.rank_unit!r}")

    def to_json(self) -> dict:
        return {
            "k_docs": self.k_docs,
            "n_top_refs": self.n_top_refs,
            "max_snippet_tokens": self.max_snippet_tokens,
            "temperature": self.temperature,
            "rating_min": self.rating_min,
            "rating_max": self.rating_max,
            "title_match_threshold": self.title_match_threshold,
            "rank_unit": self.rank_unit,
        }

    @classmethod
    def from_mapping(cls, mapping: dict) -> "PipelineConfig":
        known = {f: mapping[f] for f in cls.__dataclass_fields__ if f in mapping}
        return cls(**known)


def parse_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` config file (TOML-style scalars only).

    Values are coerced: quoted strings, booleans, integers, floats, bare
    strings. Lines starting with # are comments.
    """
    values: dict[str, object] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError("bad_config_line", f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = _coerce(value.strip())
    return values


def _coerce(text: str):
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text
