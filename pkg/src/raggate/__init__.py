"""raggate: uncertainty-gated retrieval-augmented generation.

Decides per query whether retrieval is worth it (normalized negative
log-likelihood of the parametric answer against a threshold) and, when it
is, retrieves along two paths (query and generated pseudo-context) and
keeps the documents best aligned with both, scored by cos(theta1 + theta2).
Ships an exact flat inner-product index with optional compiled kernels, an
OpenAI-compatible generator/embedder client plus deterministic offline
mocks, and an EM/F1/recall evaluation harness.
"""

from .corpus import DocChunk, QueryItem, load_corpus, load_queries
from .embedding import EmbeddingCache, HashEmbedder, ScriptedEmbedder, embed_texts
from .generator import GenerationRequest, GenerationResult, MockGenerator, generate
from .index import FlatIndex, Hit
from .pipeline import Pipeline, PipelineMode, QueryTrace, RunConfig
from .selection import ScoredDoc, SelectionResult, dual_retrieve, joint_score, select
from .uncertainty import TriggerDecision, UncertaintyScore, decide, uncertainty

__version__ = "0.1.0"

__all__ = [
    "DocChunk",
    "QueryItem",
    "load_corpus",
    "load_queries",
    "EmbeddingCache",
    "HashEmbedder",
    "ScriptedEmbedder",
    "embed_texts",
    "GenerationRequest",
    "GenerationResult",
    "MockGenerator",
    "generate",
    "FlatIndex",
    "Hit",
    "Pipeline",
    "PipelineMode",
    "QueryTrace",
    "RunConfig",
    "ScoredDoc",
    "SelectionResult",
    "dual_retrieve",
    "joint_score",
    "select",
    "TriggerDecision",
    "UncertaintyScore",
    "decide",
    "uncertainty",
]
