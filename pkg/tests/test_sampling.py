import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reqclarify.exceptions import DegenerateSplitError, UsageError
from reqclarify.sampling import (
    ShotSet,
    all_orderings,
    make_instance_split,
    make_shot_set,
    make_split,
    rank_permutation,
    round_half_away,
    sample_instance_shots,
    sample_orderings,
    sample_pairs,
    sample_permutations,
    train_count,
    unrank_permutation,
)


def test_rounding_is_half_away_from_zero():
    assert [round_half_away(x) for x in (0.5, 1.5, 2.5, -0.5, 9.6, 12.9)] == [1, 2, 3, -1, 10, 13]
    # python's round() would give 2 here
    assert train_count(5, 0.5) == 3


@pytest.mark.parametrize("defect,sizes", [
    # 57 positives, 43 negatives: round(17.1)=17, round(12.9)=13
    ("incompleteness", (17, 13, 40, 30)),
    # 24 positives, 76 negatives: round(7.2)=7, round(22.8)=23
    ("lexical", (7, 23, 17, 53)),
    # 11 positives, 89 negatives: round(3.3)=3, round(26.7)=27
    ("vagueness", (3, 27, 8, 62)),
])
def test_split_sizes(synthetic, defect, sizes):
    for seed in (10, 20, 45):
        s = make_split(synthetic, defect, seed).sizes()
        assert (s["positive_train"], s["negative_train"], s["positive_test"],
                s["negative_test"]) == sizes


@pytest.mark.parametrize("defect,train,test", [
    ("semantic", 3, 7), ("vagueness", 4, 10), ("pragmatic", 10, 22), ("incompleteness", 17, 40)])
def test_instance_split_sizes(synthetic, defect, train, test):
    s = make_instance_split(synthetic, defect, 10)
    assert (len(s.positive_train), len(s.positive_test)) == (train, test)


def test_split_partitions_and_is_deterministic(synthetic):
    a = make_split(synthetic, "pragmatic", 20)
    assert a == make_split(synthetic, "pragmatic", 20)
    parts = [a.positive_train, a.negative_train, a.positive_test, a.negative_test]
    flat = [k for p in parts for k in p]
    assert len(flat) == len(set(flat)) == 100
    pos = synthetic.positive_keys("pragmatic")
    assert set(a.positive_train) | set(a.positive_test) == pos
    assert make_split(synthetic, "pragmatic", 45) != a


def test_split_ignores_input_order(tiny_corpus):
    from reqclarify.corpus import AnnotatedCorpus
    rev = AnnotatedCorpus(tuple(reversed(tiny_corpus.requests)),
                          tiny_corpus.ambiguity_annotations, tiny_corpus.incompleteness_annotations)
    assert make_split(rev, "vagueness", 10) == make_split(tiny_corpus, "vagueness", 10)


def test_degenerate_split(tiny_corpus):
    with pytest.raises(DegenerateSplitError):
        make_split(tiny_corpus, "lexical", 10)
    with pytest.raises(DegenerateSplitError):
        make_instance_split(tiny_corpus, "semantic", 10)
    with pytest.raises(UsageError):
        make_split(tiny_corpus, "vagueness", 10, train_fraction=1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from(["lexical", "semantic", "incompleteness"]),
       st.floats(0.05, 0.95))
def test_split_partition_property(synthetic, seed, defect, fraction):
    s = make_split(synthetic, defect, seed, fraction)
    n_pos = len(synthetic.positive_keys(defect))
    assert len(s.positive_train) == round_half_away(fraction * n_pos)
    assert len(s.positive_train) + len(s.positive_test) == n_pos
    assert len(s.testing_set) + len(s.positive_train) + len(s.negative_train) == 100
    assert not set(s.testing_set) & (set(s.positive_train) | set(s.negative_train))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 7), st.integers(0, 2 ** 32))
def test_pairs_are_unique(n, seed):
    pos = [("p", i) for i in range(7)]
    neg = [("n", i) for i in range(9)]
    pairs = sample_pairs(pos, neg, n, seed)
    assert len(pairs) == n
    assert len({p for p, _ in pairs}) == n and len({q for _, q in pairs}) == n
    assert all(p in pos and q in neg for p, q in pairs)
    assert pairs == sample_pairs(list(reversed(pos)), neg, n, seed)


def test_pairs_infeasible():
    with pytest.raises(UsageError, match="maximum feasible n is 2"):
        sample_pairs([1, 2], [3, 4, 5], 3, 0)
    with pytest.raises(UsageError):
        sample_pairs([1], [2], -1, 0)


def test_shot_set(synthetic):
    split = make_split(synthetic, "vagueness", 10)
    shots = make_shot_set(split, 3, 99)
    assert shots.total_shots == 6
    assert all(p in split.positive_train and q in split.negative_train for p, q in shots.pairs)
    with pytest.raises(UsageError):
        make_shot_set(split, 4, 0)


def test_instance_shots(synthetic):
    s = make_instance_split(synthetic, "semantic", 10)
    shots = sample_instance_shots(s, 3, 1)
    assert sorted(shots) == sorted(s.positive_train)
    with pytest.raises(UsageError):
        sample_instance_shots(s, 4, 1)


def test_permutation_rank_roundtrip():
    for n in range(6):
        seen = [unrank_permutation(r, n) for r in range(math.factorial(n))]
        assert len(set(seen)) == math.factorial(n)
        assert seen == sorted(seen)
        assert [rank_permutation(p) for p in seen] == list(range(math.factorial(n)))


def test_six_orderings_of_three_are_distinct():
    got = sample_permutations(3, 6, seed=5)
    assert len({p for _, p in got}) == 6
    # asking for more than n! collapses to the full set
    assert len(sample_permutations(3, 10, seed=5)) == 6


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10), st.integers(1, 30), st.integers(0, 1000))
def test_sampled_orderings_are_distinct(n, k, seed):
    got = sample_permutations(n, k, seed)
    assert len(got) == min(k, math.factorial(n))
    assert len({p for _, p in got}) == len(got)
    assert all(sorted(p) == list(range(n)) for _, p in got)


def test_large_n_sampling():
    got = sample_permutations(25, 3, 1)
    assert len({r for r, _ in got}) == 3


def test_orderings_of_a_shot_set():
    shots = ShotSet(2, (("a", "b"), ("c", "d")))
    assert set(sample_orderings(shots, 5, 0)) == set(all_orderings(shots.pairs))
    with pytest.raises(UsageError):
        all_orderings(range(5))
