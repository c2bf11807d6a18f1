"""Per-layer language-model embeddings and word ranks for word transcripts."""

from .bundleio import write_embedding_set
from .errors import (
    BundleMismatch,
    EmptyVocabulary,
    ExtractorError,
    ModelUnavailable,
    TokenizationMismatch,
    TranscriptError,
    VectorTableError,
)
from .extract import EmbeddedWord, ExtractionResult, extract_embeddings
from .model import ModelAdapter, Session, resolve_model
from .static import StaticResult, export_static, read_vector_table
from .toylm import ToyCausalLM
from .transcript import TranscriptRow, read_transcript

__version__ = "0.1.0"

__all__ = [
    "BundleMismatch",
    "EmbeddedWord",
    "EmptyVocabulary",
    "ExtractionResult",
    "ExtractorError",
    "ModelAdapter",
    "ModelUnavailable",
    "Session",
    "StaticResult",
    "TokenizationMismatch",
    "ToyCausalLM",
    "TranscriptError",
    "TranscriptRow",
    "VectorTableError",
    "export_static",
    "extract_embeddings",
    "read_transcript",
    "read_vector_table",
    "resolve_model",
    "write_embedding_set",
]
