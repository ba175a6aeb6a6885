from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field

from ..exceptions import UsageError
from ..taxonomy import ALL_KINDS
from .models import AnnotatedCorpus

SECONDS_PER_DAY = 86400.0


@dataclass
class StatsReport:
    n_requests: int
    requests_per_defect: dict
    instances_per_defect: dict
    mean_turnaround_days: dict = field(default_factory=dict)  # repo -> days, closed requests only
    requests_without_annotations: int = 0

    def as_table(self) -> str:
        header = "            " + "".join(f"{k.label[:6]:>9}" for k in ALL_KINDS)
        rows = [
            "# Requests  " + "".join(f"{self.requests_per_defect[k]:>9}" for k in ALL_KINDS),
            "# Instances " + "".join(f"{self.instances_per_defect[k]:>9}" for k in ALL_KINDS),
        ]
        lines = [header, *rows, "", f"requests: {self.n_requests}",
                 f"requests without annotations: {self.requests_without_annotations}"]
        for repo, days in sorted(self.mean_turnaround_days.items()):
            lines.append(f"mean turnaround {repo}: {days:.1f} days")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "n_requests": self.n_requests,
            "requests_per_defect": {k.value: v for k, v in self.requests_per_defect.items()},
            "instances_per_defect": {k.value: v for k, v in self.instances_per_defect.items()},
            "mean_turnaround_days": dict(sorted(self.mean_turnaround_days.items())),
            "requests_without_annotations": self.requests_without_annotations,
        }


def corpus_stats(corpus: AnnotatedCorpus) -> StatsReport:
    requests_per, instances_per = {}, {}
    annotated = set()
    for kind in ALL_KINDS:
        anns = corpus.annotations_for(kind)
        instances_per[kind] = len(anns)
        keys = {a.request_key for a in anns}
        requests_per[kind] = len(keys)
        annotated |= keys

    spans = defaultdict(list)
    for r in corpus.requests:
        if r.closed_at is not None:
            spans[r.repo].append((r.closed_at - r.created_at).total_seconds() / SECONDS_PER_DAY)
    turnaround = {repo: sum(v) / len(v) for repo, v in spans.items()}

    return StatsReport(
        n_requests=len(corpus),
        requests_per_defect=requests_per,
        instances_per_defect=instances_per,
        mean_turnaround_days=turnaround,
        requests_without_annotations=sum(1 for k in corpus.keys if k not in annotated),
    )


def cohens_kappa(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two annotators over the same items."""
    labels_a, labels_b = list(labels_a), list(labels_b)
    if not labels_a or len(labels_a) != len(labels_b):
        raise UsageError("kappa needs two non-empty label lists of equal length")
    n = len(labels_a)
    agree = sum(a == b for a, b in zip(labels_a, labels_b))
    freq_a, freq_b = Counter(labels_a), Counter(labels_b)
    chance = sum(freq_a[c] * freq_b[c] for c in freq_a)
    # (p_o - p_e) / (1 - p_e) scaled by n^2, so the only rounding is the final division
    if chance == n * n:
        # both annotators used one identical label throughout
        return 1.0
    return (n * agree - chance) / (n * n - chance)
