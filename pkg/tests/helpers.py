"""Small hand-built corpora and scripted backends for tests."""
from reqclarify.corpus import (
    AmbiguityAnnotation,
    AnnotatedCorpus,
    Comment,
    FeatureRequest,
    IncompletenessAnnotation,
)

REPO = "octo/app"


def request(n, title, body, **kw):
    kw.setdefault("labels", ("Feature",))
    kw.setdefault("created_at", "2021-01-01T00:00:00Z")
    return FeatureRequest(repo=REPO, issue_number=n, title=title, body=body, **kw)


def make_corpus():
    """Six requests: 3 vague, 3 incomplete (overlapping), 2 clean."""
    reqs = [
        request(1, "Faster sync", "Sync should be much faster on slow networks."),
        request(2, "Bigger icons", "The icons are too small and the list looks messy."),
        request(3, "Dark mode", "Add a dark theme toggle under Settings > Display."),
        request(4, "Quiet hours", "Mute notifications at night quite often."),
        request(5, "Export", "Allow exporting chats."),
        request(6, "Alt badge", "Show an ALT badge on images with a description."),
    ]
    k = {r.issue_number: r.key for r in reqs}
    amb = [
        AmbiguityAnnotation(k[1], "vagueness", "much faster", ("under 1 s", "2x"), "no target",
                            ("How fast is fast enough?",)),
        AmbiguityAnnotation(k[2], "vagueness", "too small", ("a", "b"), "no size",
                            ("What size?",)),
        AmbiguityAnnotation(k[2], "vagueness", "looks messy", ("a", "b"), "subjective",
                            ("What looks messy?",)),
        AmbiguityAnnotation(k[4], "vagueness", "quite often", ("a", "b"), "no frequency",
                            ("How often?",)),
    ]
    inc = [
        IncompletenessAnnotation(k[1], ("network types",), "which networks", ("Which networks?",)),
        IncompletenessAnnotation(k[4], ("time window",), "when is night", ("Which hours?",)),
        IncompletenessAnnotation(k[5], ("file format", "scope"), "format unknown",
                                 ("Which format?", "All chats or one?")),
    ]
    return AnnotatedCorpus(tuple(reqs), tuple(amb), tuple(inc))


def comment(body="ok"):
    return Comment(author="x", created_at="2021-01-02T00:00:00Z", body=body)


def _tested_request(corpus, prompt):
    head = prompt[:prompt.rfind("####")]
    head = head[max(head.rfind("Statement: "), head.rfind("Feature Request: ")):]
    head = head.split("\nAmbiguous Segment: ")[0].split("\nMissing Information: ")[0]
    hits = [r for r in corpus.requests if head.rstrip().endswith(r.text.rstrip())]
    assert len(hits) == 1, "prompt does not identify exactly one request"
    return hits[0]


def oracle_answer(corpus, bundle):
    """The ground-truth answer for any detection or CQ prompt over ``corpus``."""
    from reqclarify.parsing import (format_cq_list, format_missing, format_reasoned,
                                    format_segment_list)
    from reqclarify.prompting import PromptKind

    req = _tested_request(corpus, bundle.text)
    kind, defect = bundle.kind, bundle.defect
    if kind in (PromptKind.AMBIGUITY_REFINE, PromptKind.INCOMPLETENESS_REFINE):
        tail = bundle.text[bundle.text.rfind("Statement: "):]
        for inst in corpus.instances(defect):
            if inst.key != req.key:
                continue
            if f"Reason: {inst.reasoning}\n" in tail:
                return format_cq_list(inst.cqs)
        raise AssertionError("no instance matches the CQ prompt")
    items = corpus.gt_items(defect)[req.key]
    if not items:
        return ("Missing Information: No Defect Found" if kind is PromptKind.INCOMPLETENESS_DETECT
                else "No Defect Found")
    if kind is PromptKind.AMBIGUITY_DETECT_REASONED:
        return format_reasoned(corpus.gt_reasoned(defect)[req.key])
    if kind is PromptKind.INCOMPLETENESS_DETECT:
        return format_missing(items)
    return format_segment_list(items)
