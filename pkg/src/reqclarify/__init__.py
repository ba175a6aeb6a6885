"""Detect ambiguity and incompleteness in feature requests and generate clarifying questions."""
__version__ = "0.1.0"

from .corpus import (
    AmbiguityAnnotation,
    AnnotatedCorpus,
    DefectInstance,
    FeatureRequest,
    IncompletenessAnnotation,
    cohens_kappa,
    corpus_stats,
    load_corpus,
)
from .estimators import ClarifyingQuestionGenerator, DefectDetector
from .exceptions import (
    ConfigurationError,
    DegenerateEmbeddingError,
    IntegrityError,
    MissingFixtureError,
    ParseError,
    ReqClarifyError,
    TransportError,
    UsageError,
)
from .gateway import Gateway, ReplayStore
from .metrics import binary_prf, cosine_scores, match_counts, rouge_l, rouge_n, segment_f1
from .runner import ExperimentConfig, MetricReport, analyze_issue, run_detection, run_refinement
from .taxonomy import DefectKind
