"""Oracle to PostgreSQL migration toolkit.

Feature profiling, statement-aligned chunking, a retrieval knowledge base,
four translation pipelines over pluggable backends, backend-agnostic
evaluation, and dataset-gap estimation for the next fine-tuning round.
"""

from .chunker import Chunk, ChunkConfig, assemble, chunk
from .errors import *  # noqa: F401,F403
from .evaluation import evaluate_files, evaluate_run, feature_coverage, feature_correlation
from .gap import (FeatureQuality, GapWeights, estimate_dataset, gap_dict, gap_feature, project_yield,
                  quality_score)
from .kb import KbEntry, KnowledgeBase, StoreKind, TrigramEmbedder, VectorIndex, build_index
from .lexer import Dialect, tokenize
from .metrics import bleu, chrf, token_recall
from .taxonomy import (FeatureProfile, FeatureTaxonomy, SourceScript, default_taxonomy, load_taxonomy,
                       profile, profile_corpus)
from .translate import (EchoBackend, HttpLlmBackend, MigrationConfig, Pipeline, RuleBaselineBackend,
                        build_prompt, run_conversion, run_history, run_pipeline, run_rag)
from .validator import ser_metrics, validate_syntax

__version__ = "0.1.0"
