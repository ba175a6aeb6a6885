"""Input checks shared by the estimators."""
from __future__ import annotations

from .corpus.models import DefectInstance, FeatureRequest
from .exceptions import UsageError


def check_requests(X) -> list:
    """Return ``X`` as a list of FeatureRequest; plain strings are wrapped."""
    if isinstance(X, (str, FeatureRequest)):
        raise UsageError("expected a sequence of requests, got a single item")
    out = []
    for i, x in enumerate(X):
        if isinstance(x, FeatureRequest):
            out.append(x)
        elif isinstance(x, str):
            out.append(FeatureRequest.from_text(x, key=("local/text", i + 1)))
        else:
            raise UsageError(f"item {i} is {type(x).__name__}, expected FeatureRequest or str")
    keys = [r.key for r in out]
    if len(set(keys)) != len(keys):
        raise UsageError("requests must have distinct keys")
    return out


def check_item_labels(y, n_samples) -> list:
    """Per-request item lists; an empty list marks a negative."""
    if y is None:
        raise UsageError("fit needs labels")
    y = [tuple(items) for items in y]
    if len(y) != n_samples:
        raise UsageError(f"got {len(y)} label lists for {n_samples} requests")
    return y


def check_instances(X) -> list:
    X = list(X)
    for i, x in enumerate(X):
        if not isinstance(x, DefectInstance):
            raise UsageError(f"item {i} is {type(x).__name__}, expected DefectInstance")
    if len({x.defect for x in X}) > 1:
        raise UsageError("all instances must share one defect kind")
    return X


def check_shot_count(n_shots, paired=True) -> int:
    if not isinstance(n_shots, int) or n_shots < 0:
        raise UsageError(f"n_shots must be a non-negative integer, got {n_shots!r}")
    if paired and n_shots % 2:
        raise UsageError(f"detection shots come in positive/negative pairs; {n_shots} is odd")
    return n_shots // 2 if paired else n_shots
