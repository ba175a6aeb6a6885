"""Regenerate the 12-request fixture corpus and its replay store.

Responses come from a scripted backend that knows the fixture ground truth:
it answers correctly most of the time, gets better with more shots, returns
near misses and wrong verdicts some of the time, and now and then produces a
malformed answer (prose, fenced, or echoing the prompt) so the parser and the
re-ask path see real work. Every answer is a pure function of the prompt
fingerprint and repetition index, so regenerating gives the same store.

    python3 scripts/make_fixtures.py
"""
import random
import shutil
import sys
from pathlib import Path

from reqclarify.corpus import (
    AmbiguityAnnotation,
    AnnotatedCorpus,
    Comment,
    FeatureRequest,
    IncompletenessAnnotation,
    load_corpus,
    save_corpus,
)
from reqclarify.estimators import REASK_SUFFIX
from reqclarify.gateway import CallableBackend, Gateway, HashingEmbedder, ReplayStore
from reqclarify.parsing import format_missing, format_reasoned, format_segment_list
from reqclarify.prompting import PromptKind
from reqclarify.runner import ExperimentConfig, analyze_issue, run_detection, run_refinement
from reqclarify.taxonomy import NO_DEFECT, DefectKind

sys.path.insert(0, str(Path(__file__).resolve().parent))
from make_synthetic_corpus import INCOMPLETE, LEXICAL, PRAGMATIC, SEMANTIC, SYNTACTIC, VAGUENESS  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src/reqclarify/data/fixtures"
CONFIGS = ROOT / "configs"
M, S = "mastodon/mastodon-android", "signalapp/Signal-Android"

ISSUE_160 = dict(
    repo=M, issue_number=160, title="Group notifications for boosts and favorites",
    body=("When one of my toots gets popular the notification tab looks messy, "
          "I recently got 14 boosts and a lot of favorites and every single one is its own row. "
          "It would be nice if boosts and favorites on the same toot were grouped into one "
          "notification that shows the names of the people."),
)
ISSUE_160_ANNOTATIONS = [
    ("vagueness", "looks messy", ["too many rows are shown", "rows are visually inconsistent"],
     "'Messy' gives no criterion for what an acceptable notification tab looks like.",
     ["What makes the notification tab look messy to you?",
      "Would a single grouped row per toot solve it?"]),
    ("vagueness", "a lot of favorites", ["dozens of favorites", "hundreds of favorites"],
     "'A lot' does not say how many favorites trigger the problem.",
     ["How many favorites does a toot need before grouping should start?"]),
]
ISSUE_160_MISSING = (
    ["layout of grouped notifications", "maximum number of names displayed",
     "behavior when the name limit is reached"],
    "The request does not describe the grouped layout, how many names are listed, "
    "or what happens beyond that limit.",
    ["How should a grouped notification be laid out?",
     "How many names should be shown at most?",
     "What should be shown once more people than that have interacted?"],
)

CLEAN = [
    dict(repo=S, issue_number=2301, title="Toggle for link previews in groups",
         body=("Add a switch under Settings > Chats that disables link previews in group "
               "conversations only. One-to-one chats keep the current behavior and the switch "
               "defaults to on.")),
    dict(repo=M, issue_number=412, title="Show alt text badge on images",
         body=("Show a small ALT badge in the bottom left corner of every image that has a "
               "description. Tapping the badge opens the description in a dialog.")),
]

# (repo, number, title, intro, [(kind, bank entry index)], incomplete entry index or None)
PLAN = [
    (S, 1133, "Pinned chats", "Chat list improvements.",
     [("lexical", 0), ("lexical", 3)], 2),
    (M, 231, "Media saving", "About media in conversations.",
     [("lexical", 4), ("pragmatic", 1)], None),
    (S, 1480, "Reply filters", "Filtering replies.",
     [("syntactic", 0), ("syntactic", 1)], 3),
    (M, 388, "Group moderation", "Moderation for groups.",
     [("syntactic", 3), ("semantic", 2)], 5),
    (S, 1702, "Admin approval", "Group admin tools.",
     [("semantic", 1), ("pragmatic", 2), ("pragmatic", 6)], None),
    (M, 517, "Larger icons", "Icon sizes on big screens.",
     [("pragmatic", 0), ("vagueness", 4)], 6),
    (S, 2044, "Message flags", "Message actions.",
     [("lexical", 6), ("syntactic", 5)], None),
    (M, 602, "Shared backups", "Backups.",
     [("semantic", 5)], 14),
    (S, 2570, "Faster loading", "Loading the timeline.",
     [("vagueness", 2)], 10),
]
BANKS = {"lexical": LEXICAL, "syntactic": SYNTACTIC, "semantic": SEMANTIC,
         "pragmatic": PRAGMATIC, "vagueness": VAGUENESS}

DETECT = dict(corpus="@fixture", store="@fixture", seeds=(10, 45), shot_counts=(0, 2),
              repetitions=3, embedder="hashing")
REFINE = dict(corpus="@fixture", store="@fixture", seeds=(10, 45), shot_counts=(0, 1),
              repetitions=2, embedder="hashing")


def _comment(i):
    return (Comment(author=f"dev{i}", created_at="2021-03-01T10:00:00Z",
                    body="Thanks, adding this to the backlog."),)


def build_corpus():
    requests, amb, inc = [], [], []
    r = FeatureRequest(**ISSUE_160, author="reporter160", created_at="2017-04-12T09:30:00Z",
                       closed_at="2017-12-22T09:30:00Z", state="closed",
                       labels=("Feature Request",), comments=_comment(0))
    requests.append(r)
    for kind, seg, interps, reason, cqs in ISSUE_160_ANNOTATIONS:
        amb.append(AmbiguityAnnotation(r.key, kind, seg, tuple(interps), reason, tuple(cqs)))
    items, reason, cqs = ISSUE_160_MISSING
    inc.append(IncompletenessAnnotation(r.key, tuple(items), reason, tuple(cqs)))
    for i, (repo, number, title, intro, entries, missing) in enumerate(PLAN, 1):
        chosen = [(kind, BANKS[kind][j]) for kind, j in entries]
        body = " ".join([intro] + [e[0].format(seg=e[1]) for _, e in chosen])
        r = FeatureRequest(repo=repo, issue_number=number, title=title, body=body,
                           author=f"user{i}", created_at=f"2020-0{1 + i % 9}-15T12:00:00Z",
                           state="open", labels=("Feature",) if repo == S else ("Feature Request",),
                           comments=_comment(i))
        requests.append(r)
        for kind, (_, seg, interps, reason, cqs) in chosen:
            amb.append(AmbiguityAnnotation(r.key, kind, seg, tuple(interps), reason, tuple(cqs)))
        if missing is not None:
            items, reason, cqs = INCOMPLETE[missing]
            inc.append(IncompletenessAnnotation(r.key, tuple(items), reason, tuple(cqs)))
    for i, spec in enumerate(CLEAN, 20):
        requests.append(FeatureRequest(**spec, author=f"user{i}", created_at="2022-05-05T08:00:00Z",
                                       state="open", labels=("Feature",), comments=_comment(i)))
    requests.sort(key=lambda x: x.key)
    return AnnotatedCorpus(tuple(requests), tuple(amb), tuple(inc))


# --- scripted backend -------------------------------------------------------------

MARKERS = {
    PromptKind.AMBIGUITY_DETECT: "Statement: ",
    PromptKind.AMBIGUITY_DETECT_REASONED: "Feature Request: ",
    PromptKind.INCOMPLETENESS_DETECT: "Statement: ",
    PromptKind.AMBIGUITY_REFINE: "Statement: ",
    PromptKind.INCOMPLETENESS_REFINE: "Statement: ",
}


class ScriptedModel:
    def __init__(self, corpus):
        self.corpus = corpus
        self.by_text = {r.text: r for r in corpus.requests}

    def _test_request(self, bundle):
        text = bundle.text
        start = text.rindex(MARKERS[bundle.kind]) + len(MARKERS[bundle.kind])
        stop = {PromptKind.AMBIGUITY_REFINE: " \nAmbiguous Segment: ",
                PromptKind.INCOMPLETENESS_REFINE: " \nMissing Information: "}.get(bundle.kind, " \n####")
        end = text.index(stop, start)
        statement = text[start:end]
        return self.by_text.get(statement), text[end:]

    def __call__(self, bundle, rep):
        rng = random.Random(f"{bundle.fingerprint}:{rep}")
        reask = bundle.text.endswith(REASK_SUFFIX)
        request, tail = self._test_request(bundle)
        if not reask and rng.random() < 0.06:
            return rng.choice([
                "Let me look at this.\nThe statement mentions several things.",
                "I cannot tell from the statement alone.\nIt depends on the product.",
            ])
        if bundle.kind in (PromptKind.AMBIGUITY_REFINE, PromptKind.INCOMPLETENESS_REFINE):
            return self._questions(bundle, request, tail, rng)
        return self._detect(bundle, request, rng)

    def _quality(self, bundle):
        return min(0.9, 0.6 + 0.08 * bundle.shot_count)

    def _detect(self, bundle, request, rng):
        defect = bundle.defect
        anns = [] if request is None else [
            a for a in self.corpus.annotations_for(defect) if a.request_key == request.key]
        q, r = self._quality(bundle), rng.random()
        if defect is DefectKind.INCOMPLETENESS:
            truth = [x for a in anns for x in a.missing_items]
            if r < q:
                out = truth
            elif r < q + 0.15:
                out = truth[:1] + ["expected performance"] if truth else ["expected performance"]
            else:
                out = [] if truth else ["exact wording of the setting"]
            answer = format_missing(out) if out else NO_DEFECT
            return self._dress(answer, "Missing Information: ", rng)
        truth = [(a.reasoning, a.segment) for a in anns]
        if r < q:
            out = truth
        elif r < q + 0.15 and request is not None:
            words = request.body.split()
            out = [(reason, " ".join(seg.split()[1:]) or seg) for reason, seg in truth] or \
                [("This phrase could be read in more than one way.", " ".join(words[:3]))]
        else:
            out = [] if truth or request is None else \
                [("The wording leaves room for interpretation.", " ".join(request.body.split()[-3:]))]
        if bundle.kind is PromptKind.AMBIGUITY_DETECT_REASONED:
            answer = format_reasoned(out) if out else NO_DEFECT
        else:
            answer = format_segment_list([s for _, s in out]) if out else NO_DEFECT
        return self._dress(answer, f"Extracted {defect.label} segment(s): ", rng)

    def _dress(self, answer, echo, rng):
        r = rng.random()
        if r < 0.05:
            return f"```\n{answer}\n```"
        if r < 0.10:
            return echo + answer
        return answer

    def _questions(self, bundle, request, tail, rng):
        defect = bundle.defect
        target = None
        if request is not None:
            for inst in self.corpus.instances(defect):
                if inst.key != request.key:
                    continue
                if defect is DefectKind.INCOMPLETENESS or f"Ambiguous Segment: {inst.segment}" in tail:
                    target = inst
                    break
        generic = ["Could you describe the expected behavior in more detail?"]
        q, r = self._quality(bundle), rng.random()
        if target is None:
            out = generic
        elif r < q:
            out = list(target.cqs)
        elif r < q + 0.2:
            out = list(target.cqs[:1]) + ["Is there anything else we should know?"]
        else:
            out = generic
        answer = format_segment_list(out)
        return "Clarifying Questions: " + answer if rng.random() < 0.05 else answer


def record(corpus):
    store_dir = DATA / "replay"
    if store_dir.exists():
        shutil.rmtree(store_dir)
    store = ReplayStore(store_dir)
    gw = Gateway("live", store, CallableBackend(ScriptedModel(corpus), "scripted-fixture"),
                 HashingEmbedder(), concurrency=1)
    run_detection(ExperimentConfig(task="detect", **DETECT), corpus=corpus, gateway=gw)
    run_detection(ExperimentConfig(task="detect", reasoned=True, **DETECT), corpus=corpus,
                  gateway=gw)
    run_refinement(ExperimentConfig(task="refine", **REFINE), corpus=corpus, gateway=gw)
    issue = corpus.request((M, 160))
    analyze_issue(issue.text, gw)
    analyze_issue(corpus.request((S, 2301)).text, gw)
    return len(gw.calls)


def write_configs():
    import yaml
    CONFIGS.mkdir(exist_ok=True)
    for name, cfg in (("fixture-detect.yaml", DETECT), ("fixture-refine.yaml", REFINE)):
        data = {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}
        (CONFIGS / name).write_text(yaml.safe_dump(data, sort_keys=True), encoding="utf-8")


def main():
    corpus = build_corpus()
    DATA.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, DATA / "fixture_corpus.jsonl")
    (DATA / "issue_160.txt").write_text(corpus.request((M, 160)).text + "\n", encoding="utf-8")
    write_configs()
    calls = record(corpus)
    print(f"{len(corpus)} requests, {calls} recorded calls")


if __name__ == "__main__":
    main()
