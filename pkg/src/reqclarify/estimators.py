"""scikit-learn style estimators for defect detection and CQ generation.

``fit`` selects the few-shot demonstrations from the training data; ``predict``
renders one prompt per input, sends it through a :class:`Gateway` and parses
the answer. Parameters follow the usual ``get_params``/``set_params`` contract
so the estimators can be cloned and grid-searched.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ParseError, UsageError
from .gateway import CompletionRequest
from .metrics import binary_prf, cosine_scores, segment_f1
from .parsing import (
    CQList,
    DetectionVerdict,
    parse_cq_list,
    parse_missing_info,
    parse_reasoned_tuples,
    parse_segment_list,
)
from .prompting import (
    DecodingParams,
    Demonstration,
    PromptBundle,
    render_cq_prompt,
    render_detection,
)
from .sampling import sample_pairs, sample_permutations, unrank_permutation
from .taxonomy import DefectKind
from .validation import check_instances, check_item_labels, check_requests, check_shot_count

REASK_SUFFIX = "\n\nAnswer again using exactly the output format requested above."


@dataclass(frozen=True)
class Prediction:
    """One prediction with its audit trail."""

    key: tuple
    bundle: PromptBundle
    response: str
    verdict: object  # DetectionVerdict or CQList
    reasked: bool = False
    error: str | None = None
    calls: tuple = ()  # (bundle, response) for every completion behind this prediction


def _reask_bundle(bundle: PromptBundle) -> PromptBundle:
    return PromptBundle(kind=bundle.kind, defect=bundle.defect, text=bundle.text + REASK_SUFFIX,
                        shot_count=bundle.shot_count, ordering_id=bundle.ordering_id,
                        decoding=bundle.decoding, system=bundle.system)


def _choose_ordering(n, ordering, ordering_seed):
    if ordering is None:
        return sample_permutations(n, 1, ordering_seed)[0]
    return ordering, unrank_permutation(ordering, n)


class _PromptingEstimator(BaseEstimator):
    def _gateway(self):
        if self.gateway is None:
            raise UsageError(f"{type(self).__name__} needs a gateway to predict")
        return self.gateway

    def _complete_and_parse(self, keyed_bundles, parse):
        gw = self._gateway()
        results = gw.map_complete(
            [CompletionRequest(b, self.repetition) for _, b in keyed_bundles], return_exceptions=True
        )
        out, retry = [], []
        for (key, bundle), result in zip(keyed_bundles, results):
            if isinstance(result, Exception):
                out.append(Prediction(key, bundle, "", None, error=f"gateway: {result}"))
                continue
            calls = ((bundle, result.text),)
            try:
                out.append(Prediction(key, bundle, result.text, parse(result.text), calls=calls))
            except ParseError as exc:
                out.append(Prediction(key, bundle, result.text, None, error=str(exc), calls=calls))
                retry.append(len(out) - 1)
        if self.reask and retry:
            bundles = [_reask_bundle(out[i].bundle) for i in retry]
            again = gw.map_complete([CompletionRequest(b, self.repetition) for b in bundles],
                                    return_exceptions=True)
            for i, b, result in zip(retry, bundles, again):
                prev = out[i]
                if isinstance(result, Exception):
                    out[i] = replace(prev, reasked=True, error=f"gateway: {result}")
                    continue
                calls = prev.calls + ((b, result.text),)
                try:
                    out[i] = replace(prev, response=result.text, verdict=parse(result.text),
                                     reasked=True, error=None, calls=calls)
                except ParseError as exc:
                    out[i] = replace(prev, response=result.text, reasked=True, error=str(exc),
                                     calls=calls)
        return out


class DefectDetector(_PromptingEstimator):
    """Detect one defect kind in feature requests by in-context learning.

    Parameters
    ----------
    defect : str or DefectKind
        One of the five ambiguity sub-classes or ``"incompleteness"``.
    n_shots : int
        Total demonstrations (positives plus negatives); must be even.
    reasoned : bool
        Ask for (reason, segment) tuples instead of a plain segment list.
    shot_seed, ordering_seed : int
        Seeds for drawing the demonstration pairs and their order.
    ordering : int or None
        Explicit rank of the pair permutation; overrides ``ordering_seed``.
    repetition : int
        Repetition index sent with each completion request.
    """

    def __init__(self, defect="incompleteness", n_shots=0, reasoned=False, shot_seed=0,
                 ordering_seed=0, ordering=None, repetition=0, gateway=None, catalog=None,
                 templates=None, decoding=None, persona_as_system=False, reask=True):
        self.defect = defect
        self.n_shots = n_shots
        self.reasoned = reasoned
        self.shot_seed = shot_seed
        self.ordering_seed = ordering_seed
        self.ordering = ordering
        self.repetition = repetition
        self.gateway = gateway
        self.catalog = catalog
        self.templates = templates
        self.decoding = decoding
        self.persona_as_system = persona_as_system
        self.reask = reask

    def fit(self, X, y, reasons=None):
        """``y[i]`` lists the ground-truth items of ``X[i]`` (empty for a negative).

        For reasoned detection pass ``reasons`` parallel to ``y``.
        """
        defect = DefectKind.parse(self.defect)
        n = check_shot_count(self.n_shots)
        X = check_requests(X)
        y = check_item_labels(y, len(X))
        if reasons is not None:
            reasons = check_item_labels(reasons, len(X))
        elif self.reasoned and n:
            raise UsageError("reasoned detection needs reasons for the positive examples")
        by_key = {x.key: i for i, x in enumerate(X)}
        positives = [x.key for x, items in zip(X, y) if items]
        negatives = [x.key for x, items in zip(X, y) if not items]
        self.pairs_ = sample_pairs(positives, negatives, n, self.shot_seed)
        self.ordering_id_, perm = _choose_ordering(n, self.ordering, self.ordering_seed)
        demos = []
        for p, q in (self.pairs_[i] for i in perm):
            i, j = by_key[p], by_key[q]
            demos.append(Demonstration(X[i].text, True, y[i],
                                       reasons[i] if reasons is not None and self.reasoned else ()))
            demos.append(Demonstration(X[j].text, False))
        self.demonstrations_ = tuple(demos)
        self.defect_ = defect
        return self

    def render(self, request) -> PromptBundle:
        check_is_fitted(self, "demonstrations_")
        return render_detection(self.defect_, self.demonstrations_, request, self.reasoned,
                                catalog=self.catalog, templates=self.templates,
                                decoding=self.decoding or DecodingParams(),
                                ordering_id=self.ordering_id_,
                                persona_as_system=self.persona_as_system)

    def _parser(self):
        if self.defect_ is DefectKind.INCOMPLETENESS:
            return parse_missing_info
        return parse_reasoned_tuples if self.reasoned else parse_segment_list

    def predict_detailed(self, X) -> list:
        check_is_fitted(self, "demonstrations_")
        X = check_requests(X)
        preds = self._complete_and_parse([(x.key, self.render(x)) for x in X], self._parser())
        return [p if p.verdict is not None else
                replace(p, verdict=DetectionVerdict.unparsed(p.response, p.error)) for p in preds]

    def predict(self, X) -> list:
        """One :class:`DetectionVerdict` per request; unparseable answers come back as
        ``unparsed`` verdicts with no items."""
        return [p.verdict for p in self.predict_detailed(X)]

    def score(self, X, y, metric="rougeL"):
        """F1 on ``(X, y)``: binary for incompleteness, segment-level otherwise."""
        X = check_requests(X)
        y = check_item_labels(y, len(X))
        verdicts = self.predict(X)
        if DefectKind.parse(self.defect) is DefectKind.INCOMPLETENESS:
            keys = [x.key for x in X]
            pred = {k for k, v in zip(keys, verdicts) if v.items}
            gt = {k for k, items in zip(keys, y) if items}
            return binary_prf(pred, gt, keys).f1
        return segment_f1({x.key: v for x, v in zip(X, verdicts)},
                          {x.key: list(items) for x, items in zip(X, y)}, metric).f1


class ClarifyingQuestionGenerator(_PromptingEstimator):
    """Generate clarifying questions for individual defect instances.

    ``fit`` draws ``n_shots`` solved instances from the training instances;
    ``predict`` returns one :class:`CQList` per instance (empty on a parse failure).
    """

    def __init__(self, n_shots=0, shot_seed=0, ordering_seed=0, ordering=None, repetition=0,
                 gateway=None, catalog=None, templates=None, decoding=None,
                 persona_as_system=False, reask=True):
        self.n_shots = n_shots
        self.shot_seed = shot_seed
        self.ordering_seed = ordering_seed
        self.ordering = ordering
        self.repetition = repetition
        self.gateway = gateway
        self.catalog = catalog
        self.templates = templates
        self.decoding = decoding
        self.persona_as_system = persona_as_system
        self.reask = reask

    def fit(self, X, y=None):
        n = check_shot_count(self.n_shots, paired=False)
        X = check_instances(X)
        if y is not None:
            y = check_item_labels(y, len(X))
            X = [x if tuple(x.cqs) == tuple(q) else replace(x, cqs=tuple(q)) for x, q in zip(X, y)]
        if n > len(X):
            raise UsageError(f"cannot draw {n} shots; the maximum feasible n is {len(X)}")
        by_ref = {x.ref: x for x in X}
        chosen = random.Random(self.shot_seed).sample(sorted(by_ref), n)
        self.ordering_id_, perm = _choose_ordering(n, self.ordering, self.ordering_seed)
        self.shots_ = tuple(by_ref[chosen[i]] for i in perm)
        return self

    def render(self, instance) -> PromptBundle:
        check_is_fitted(self, "shots_")
        return render_cq_prompt(instance, self.shots_, catalog=self.catalog,
                                templates=self.templates,
                                decoding=self.decoding or DecodingParams(),
                                ordering_id=self.ordering_id_,
                                persona_as_system=self.persona_as_system)

    def predict_detailed(self, X) -> list:
        check_is_fitted(self, "shots_")
        X = check_instances(X)
        preds = self._complete_and_parse([(x.ref, self.render(x)) for x in X], parse_cq_list)
        return [p if p.verdict is not None else replace(p, verdict=CQList((), p.response))
                for p in preds]

    def predict(self, X) -> list:
        return [p.verdict for p in self.predict_detailed(X)]

    def score(self, X, y=None):
        """Mean individual-element cosine similarity against the ground-truth CQs."""
        X = check_instances(X)
        gts = [list(q) for q in y] if y is not None else [list(x.cqs) for x in X]
        embed = self._gateway().embed
        scores = [cosine_scores(p.questions, gt, embed).individual_elements
                  for p, gt in zip(self.predict(X), gts)]
        return float(np.mean(scores)) if scores else 0.0
