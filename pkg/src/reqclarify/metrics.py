"""Segment matching, ROUGE, binary P/R/F1 and embedding cosine protocols."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateEmbeddingError, IntegrityError, UsageError

MATCH_MODES = ("exact", "coreff", "partial")
ROUGE_MODES = ("rouge1", "rouge2", "rougeL")
SEGMENT_METRICS = MATCH_MODES + ROUGE_MODES


@dataclass(frozen=True)
class MatchCounts:
    tp: float = 0
    fp: float = 0
    fn: float = 0

    def __add__(self, other):
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def prf(self) -> "PRF":
        return prf_from_counts(self.tp, self.fp, self.fn)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class RougeScore:
    variant: str
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class SimilarityScores:
    complete_list: float
    individual_elements: float


def harmonic(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def prf_from_counts(tp, fp, fn) -> PRF:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return PRF(p, r, harmonic(p, r))


def normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


def _strength(p: str, g: str, mode: str):
    """Match strength of a normalized pair, or None when the pair does not match."""
    if p == g:
        return (2, len(g))
    if mode == "coreff" and p and p in g:
        return (1, len(p))
    if mode == "partial" and g and g in p:
        return (1, len(g))
    return None


def greedy_assign(scored):
    """One-to-one assignment from (key, i, j) triples, best key first, then input order."""
    used_p, used_g, pairs = set(), set(), []
    for key, i, j in sorted(scored, key=lambda t: (tuple(-k for k in t[0]), t[1], t[2])):
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j))
    return pairs


def match_counts(pred, gt, mode="exact", *, no_defect=None) -> MatchCounts:
    """Count matches between predicted and ground-truth segments.

    ``no_defect`` says whether the prediction was an explicit no-defect verdict;
    by default an empty prediction is taken as one. A correct no-defect verdict on
    a request without ground-truth items scores one true positive.
    """
    if mode not in MATCH_MODES:
        raise UsageError(f"unknown match mode {mode!r}")
    pred, gt = list(pred), list(gt)
    if no_defect is None:
        no_defect = not pred
    if not pred and not gt:
        return MatchCounts(1 if no_defect else 0, 0, 0)
    np_, ng = [normalize(x) for x in pred], [normalize(x) for x in gt]
    scored = []
    for i, p in enumerate(np_):
        for j, g in enumerate(ng):
            s = _strength(p, g, mode)
            if s is not None:
                scored.append((s, i, j))
    tp = len(greedy_assign(scored))
    return MatchCounts(tp, len(pred) - tp, len(gt) - tp)


_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list:
    return _TOKEN.findall(text.casefold())


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _boundary(pred_tokens, ref_tokens):
    """Score for inputs too short to compare; None when the normal formula applies."""
    if not pred_tokens and not ref_tokens:
        return 1.0
    if not pred_tokens or not ref_tokens:
        return 0.0
    return None


def rouge_n(pred: str, ref: str, n: int = 1) -> RougeScore:
    if n not in (1, 2):
        raise UsageError("rouge_n supports n = 1 or 2")
    pt, rt = tokenize(pred), tokenize(ref)
    variant = f"rouge{n}"
    b = _boundary(pt, rt)
    if b is not None:
        return RougeScore(variant, b, b, b)
    pg, rg = _ngrams(pt, n), _ngrams(rt, n)
    total_p, total_r = sum(pg.values()), sum(rg.values())
    if not total_p and not total_r:
        # both shorter than n: only identical token sequences count as a match
        s = 1.0 if pt == rt else 0.0
        return RougeScore(variant, s, s, s)
    overlap = sum((pg & rg).values())
    p = overlap / total_p if total_p else 0.0
    r = overlap / total_r if total_r else 0.0
    return RougeScore(variant, p, r, harmonic(p, r))


def lcs_length(a, b) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(pred: str, ref: str) -> RougeScore:
    pt, rt = tokenize(pred), tokenize(ref)
    b = _boundary(pt, rt)
    if b is not None:
        return RougeScore("rougeL", b, b, b)
    lcs = lcs_length(pt, rt)
    p, r = lcs / len(pt), lcs / len(rt)
    return RougeScore("rougeL", p, r, harmonic(p, r))


def rouge(pred: str, ref: str, variant: str) -> RougeScore:
    if variant == "rouge1":
        return rouge_n(pred, ref, 1)
    if variant == "rouge2":
        return rouge_n(pred, ref, 2)
    if variant == "rougeL":
        return rouge_l(pred, ref)
    raise UsageError(f"unknown ROUGE variant {variant!r}")


def rouge_counts(pred, gt, variant, *, no_defect=None, threshold=None) -> MatchCounts:
    """Weighted counts: each greedily matched pair adds its ROUGE F1 to tp and the
    shortfall to fp and fn; unmatched items count 1 each. With ``threshold`` a pair
    counts as a whole tp when its F1 reaches it and is otherwise left unmatched."""
    pred, gt = list(pred), list(gt)
    if no_defect is None:
        no_defect = not pred
    if not pred and not gt:
        return MatchCounts(1 if no_defect else 0, 0, 0)
    scored = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            f = rouge(p, g, variant).f1
            if threshold is not None:
                f = 1.0 if f >= threshold else 0.0
            if f > 0:
                scored.append(((f,), i, j))
    weights = {(i, j): key[0] for key, i, j in scored}
    pairs = greedy_assign(scored)
    tp = sum(weights[p] for p in pairs)
    return MatchCounts(tp, len(pred) - tp, len(gt) - tp)


def _verdict_items(verdict):
    """(items, no_defect) from a DetectionVerdict or a bare list of items."""
    if hasattr(verdict, "kind"):
        return list(verdict.items), verdict.no_defect
    items = list(verdict)
    return items, not items


def segment_counts(predictions, gt, mode, *, rouge_threshold=None) -> MatchCounts:
    total = MatchCounts()
    for key in sorted(gt):
        if key not in predictions:
            raise IntegrityError(f"no verdict for test request {key}")
        items, no_defect = _verdict_items(predictions[key])
        if mode in MATCH_MODES:
            total = total + match_counts(items, gt[key], mode, no_defect=no_defect)
        elif mode in ROUGE_MODES:
            total = total + rouge_counts(items, gt[key], mode, no_defect=no_defect,
                                         threshold=rouge_threshold)
        else:
            raise UsageError(f"unknown metric {mode!r}")
    return total


def segment_f1(predictions, gt, mode, *, rouge_threshold=None) -> PRF:
    """Micro-averaged P/R/F1 over a test set.

    ``predictions`` and ``gt`` map request keys to verdicts (or item lists) and
    ground-truth item lists. Every key of ``gt`` needs a prediction.
    """
    return segment_counts(predictions, gt, mode, rouge_threshold=rouge_threshold).prf()


def binary_prf(pred_positive, gt_positive, universe) -> PRF:
    pred_positive, gt_positive, universe = set(pred_positive), set(gt_positive), set(universe)
    outside = (pred_positive | gt_positive) - universe
    if outside:
        raise UsageError(f"{len(outside)} key(s) outside the evaluated test set")
    tp = len(pred_positive & gt_positive)
    return prf_from_counts(tp, len(pred_positive - gt_positive), len(gt_positive - pred_positive))


def cosine(u, v) -> float:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DegenerateEmbeddingError("embedding lengths differ")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DegenerateEmbeddingError("zero-norm embedding")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _embed_fn(embedder):
    fn = getattr(embedder, "embed", embedder)

    def values(text):
        vec = fn(text)
        return getattr(vec, "values", vec)
    return values


def cosine_scores(pred_list, gt_list, embedder) -> SimilarityScores:
    """Complete-list and individual-element cosine similarity of two text lists."""
    pred_list, gt_list = list(pred_list), list(gt_list)
    if not gt_list:
        raise UsageError("ground-truth list is empty")
    if not pred_list:
        return SimilarityScores(0.0, 0.0)
    embed = _embed_fn(embedder)
    whole = cosine(embed(", ".join(pred_list)), embed(", ".join(gt_list)))
    gt_vecs = [embed(g) for g in gt_list]
    best = [max(cosine(embed(p), g) for g in gt_vecs) for p in pred_list]
    return SimilarityScores(whole, math.fsum(best) / len(best))
