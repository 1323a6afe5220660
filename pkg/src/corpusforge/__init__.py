"""Deterministic toolkit for building multilingual MT training corpora."""

__version__ = "0.1.0"

from .corpus import ConfigError, SentencePair, TaskRecord  # noqa: E402
from .lang_registry import LanguageTag, format_tag, parse_tag  # noqa: E402

__all__ = ["ConfigError", "LanguageTag", "SentencePair", "TaskRecord", "__version__", "format_tag", "parse_tag"]
