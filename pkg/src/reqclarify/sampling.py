"""Seeded train/test splits, paired shot sets, and pair orderings."""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from itertools import permutations

from .corpus.models import format_key
from .exceptions import DegenerateSplitError, UsageError
from .taxonomy import DefectKind

DEFAULT_SEEDS = (10, 20, 45)
TRAIN_FRACTION = 0.3


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def train_count(n_items: int, fraction: float) -> int:
    return round_half_away(fraction * n_items)


def _check_fraction(fraction):
    if not 0 < fraction < 1:
        raise UsageError(f"train_fraction must be in (0, 1), got {fraction}")


@dataclass(frozen=True)
class SplitPlan:
    defect: DefectKind
    seed: int
    train_fraction: float
    positive_train: tuple
    negative_train: tuple
    positive_test: tuple
    negative_test: tuple

    @property
    def testing_set(self) -> tuple:
        return self.positive_test + self.negative_test

    def sizes(self) -> dict:
        return {
            "positive_train": len(self.positive_train),
            "negative_train": len(self.negative_train),
            "positive_test": len(self.positive_test),
            "negative_test": len(self.negative_test),
            "testing_set": len(self.testing_set),
        }

    def to_record(self) -> dict:
        return {
            "kind": "split",
            "defect": self.defect.value,
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            **{name: [format_key(k) for k in getattr(self, name)]
               for name in ("positive_train", "negative_train", "positive_test", "negative_test")},
        }


def _shuffled(items, rng):
    items = sorted(items)
    rng.shuffle(items)
    return items


def make_split(corpus, defect, seed, train_fraction=TRAIN_FRACTION) -> SplitPlan:
    defect = DefectKind.parse(defect)
    _check_fraction(train_fraction)
    if not len(corpus):
        raise UsageError("cannot split an empty corpus")
    pos_keys = corpus.positive_keys(defect)
    positives = [k for k in corpus.keys if k in pos_keys]
    negatives = [k for k in corpus.keys if k not in pos_keys]
    for name, group in (("positive", positives), ("negative", negatives)):
        if not group:
            raise DegenerateSplitError(f"{defect.value}: the {name} set is empty")
    rng = random.Random(seed)
    positives = _shuffled(positives, rng)
    negatives = _shuffled(negatives, rng)
    p, q = train_count(len(positives), train_fraction), train_count(len(negatives), train_fraction)
    return SplitPlan(
        defect=defect, seed=seed, train_fraction=train_fraction,
        positive_train=tuple(positives[:p]), negative_train=tuple(negatives[:q]),
        positive_test=tuple(positives[p:]), negative_test=tuple(negatives[q:]),
    )


@dataclass(frozen=True)
class InstanceSplit:
    defect: DefectKind
    seed: int
    train_fraction: float
    positive_train: tuple  # of (request_key, annotation_index)
    positive_test: tuple

    def to_record(self) -> dict:
        return {
            "kind": "instance_split",
            "defect": self.defect.value,
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "positive_train": [[format_key(k), i] for k, i in self.positive_train],
            "positive_test": [[format_key(k), i] for k, i in self.positive_test],
        }


def make_instance_split(corpus, defect, seed, train_fraction=TRAIN_FRACTION) -> InstanceSplit:
    defect = DefectKind.parse(defect)
    _check_fraction(train_fraction)
    refs = [inst.ref for inst in corpus.instances(defect)]
    if not refs:
        raise DegenerateSplitError(f"{defect.value}: no annotated instances")
    refs = _shuffled(refs, random.Random(seed))
    p = train_count(len(refs), train_fraction)
    return InstanceSplit(defect, seed, train_fraction, tuple(refs[:p]), tuple(refs[p:]))


@dataclass(frozen=True)
class ShotSet:
    n: int
    pairs: tuple  # of (positive_key, negative_key)
    ordering_seed: int = 0

    @property
    def total_shots(self) -> int:
        return 2 * self.n

    def to_record(self) -> dict:
        return {"kind": "shot_set", "n": self.n, "ordering_seed": self.ordering_seed,
                "pairs": [[format_key(p), format_key(q)] for p, q in self.pairs]}


def sample_pairs(positives, negatives, n, seed):
    """Draw ``n`` positives and ``n`` negatives without replacement and pair them in draw order."""
    if n < 0:
        raise UsageError("shot count must be non-negative")
    limit = min(len(positives), len(negatives))
    if n > limit:
        raise UsageError(f"cannot draw {n} pairs; the maximum feasible n is {limit}")
    rng = random.Random(seed)
    pos = rng.sample(sorted(positives), n)
    neg = rng.sample(sorted(negatives), n)
    return tuple(zip(pos, neg))


def make_shot_set(split: SplitPlan, n: int, pair_seed: int) -> ShotSet:
    pairs = sample_pairs(split.positive_train, split.negative_train, n, pair_seed)
    return ShotSet(n=n, pairs=pairs, ordering_seed=pair_seed)


def sample_instance_shots(instance_split: InstanceSplit, n: int, seed: int) -> tuple:
    if not 0 <= n <= len(instance_split.positive_train):
        raise UsageError(
            f"cannot draw {n} shots; the maximum feasible n is {len(instance_split.positive_train)}"
        )
    return tuple(random.Random(seed).sample(sorted(instance_split.positive_train), n))


@dataclass(frozen=True)
class OrderingSpace:
    n: int
    seed: int = 0
    total_orderings: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total_orderings", math.factorial(self.n))


def unrank_permutation(rank: int, n: int) -> tuple:
    """Permutation of range(n) with lexicographic rank ``rank``."""
    pool = list(range(n))
    out = []
    for i in range(n, 0, -1):
        f = math.factorial(i - 1)
        idx, rank = divmod(rank, f)
        out.append(pool.pop(idx))
    return tuple(out)


def rank_permutation(perm) -> int:
    pool = sorted(perm)
    rank = 0
    for i, value in enumerate(perm):
        idx = pool.index(value)
        rank += idx * math.factorial(len(perm) - 1 - i)
        pool.pop(idx)
    return rank


def sample_permutations(n: int, k: int, seed: int) -> list:
    """Up to ``k`` distinct orderings of n items as (rank, index-permutation) pairs.

    With k >= n! every ordering is returned once, in rank order.
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    total = math.factorial(n)
    if k >= total:
        return [(r, unrank_permutation(r, n)) for r in range(total)]
    rng = random.Random(seed)
    if total <= 2 ** 62:
        ranks = rng.sample(range(total), k)
    else:
        seen = set()
        ranks = []
        while len(ranks) < k:
            r = rng.randrange(total)
            if r not in seen:
                seen.add(r)
                ranks.append(r)
    return [(r, unrank_permutation(r, n)) for r in ranks]


def sample_orderings(shot_set: ShotSet, k: int, seed: int) -> list:
    """k pair orderings (each a tuple of pairs), duplicates collapsed when n! < k."""
    return [tuple(shot_set.pairs[i] for i in perm)
            for _, perm in sample_permutations(shot_set.n, k, seed)]


def all_orderings(items) -> list:
    if len(items) > 4:
        raise UsageError("exhaustive ordering is limited to n <= 4")
    return [tuple(p) for p in permutations(items)]


def dump_records(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
