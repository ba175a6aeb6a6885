from .github import GitHubClient, fetch_feature_requests, fetch_issue
from .io import dump_corpus, load_corpus, parse_corpus, save_corpus
from .models import (
    FEATURE_LABELS,
    AmbiguityAnnotation,
    AnnotatedCorpus,
    Comment,
    DefectInstance,
    FeatureRequest,
    IncompletenessAnnotation,
    format_key,
    parse_key,
)
from .stats import StatsReport, cohens_kappa, corpus_stats
