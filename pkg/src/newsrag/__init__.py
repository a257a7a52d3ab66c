"""Retrieval-augmented question answering over broadcast news transcripts."""
from .chunker import ChunkPolicy, split
from .core import (
    Answer,
    Document,
    DocumentChunk,
    EmbeddingVector,
    NewsRagError,
    QAPair,
    RecordingMetadata,
    SearchHit,
    validate_metadata,
)
from .embedder import DeterministicEmbedder, EmbedderConfig, RemoteEmbedder, make_embedder
from .engine import EngineConfig, RagEngine
from .index import IndexedChunk, SearchFilter, VectorIndex, cosine_similarity
from .ingest import ingest_directory, parse_transcript
from .llm import ChatClient, LlmClientConfig
from .prompts import render_plain, render_with_context

__version__ = "0.1.0"

__all__ = [
    "Answer",
    "ChatClient",
    "ChunkPolicy",
    "DeterministicEmbedder",
    "Document",
    "DocumentChunk",
    "EmbedderConfig",
    "EmbeddingVector",
    "EngineConfig",
    "IndexedChunk",
    "LlmClientConfig",
    "NewsRagError",
    "QAPair",
    "RagEngine",
    "RecordingMetadata",
    "RemoteEmbedder",
    "SearchFilter",
    "SearchHit",
    "VectorIndex",
    "cosine_similarity",
    "ingest_directory",
    "make_embedder",
    "parse_transcript",
    "render_plain",
    "render_with_context",
    "split",
    "validate_metadata",
]
