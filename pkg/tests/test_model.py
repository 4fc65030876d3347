"""Core model: quantization, ranks, profiles, matchings."""

import random

import pytest

from matchsim import (
    InvalidMatching,
    InvalidProfile,
    Matching,
    PreferenceProfile,
    Side,
    man,
    quantize,
    rank,
    woman,
)


def test_quantize_exact_division():
    q = quantize(list(range(100, 108)), 4)
    assert [len(b) for b in q.buckets] == [2, 2, 2, 2]
    # ranks 1 and 2 land in the first bucket
    assert q.buckets[0] == [100, 101]


def test_quantize_ragged_division():
    q = quantize([10, 11, 12, 13, 14], 4)
    assert list(q.quantile_of) == [1, 2, 3, 4, 4]
    assert [len(b) for b in q.buckets] == [1, 1, 1, 2]


def test_quantize_fewer_partners_than_buckets():
    q = quantize([7, 8, 9], 8)
    assert list(q.quantile_of) == [3, 6, 8]
    sizes = [len(b) for b in q.buckets]
    assert sizes == [0, 0, 1, 0, 0, 1, 0, 1]


def test_quantize_empty_list():
    q = quantize([], 4)
    assert q.best_nonempty_index() is None
    assert not q.remaining


def test_quantize_rejects_bad_k():
    with pytest.raises(ValueError):
        quantize([1, 2], 0)


def test_quantize_order_preserving_and_balanced():
    rng = random.Random(7)
    for _ in range(200):
        deg = rng.randint(1, 40)
        k = rng.randint(1, 12)
        q = quantize(list(range(deg)), k)
        # quantile index is non-decreasing in rank
        assert all(a <= b for a, b in zip(q.quantile_of, q.quantile_of[1:]))
        # every bucket holds contiguous ranks
        flat = [p for b in q.buckets for p in b]
        assert flat == list(range(deg))
        if deg >= k:
            sizes = [len(b) for b in q.buckets]
            assert max(sizes) - min(sizes) <= 1
            assert all(s in (deg // k, deg // k + (1 if deg % k else 0)) for s in sizes)
            assert all(s >= 1 for s in sizes)


def test_quantize_same_bucket_width_bound():
    # two partners in one bucket differ in rank by less than 2 deg / k
    rng = random.Random(13)
    for _ in range(300):
        deg = rng.randint(1, 40)
        k = rng.randint(1, 12)
        q = quantize(list(range(deg)), k)
        for b in q.buckets:
            if len(b) >= 2:
                spread = q.rank_of[b[-1]] - q.rank_of[b[0]]
                assert spread < 2 * deg / k


def test_quantize_removal_only():
    q = quantize([5, 6, 7, 8], 2)
    q.remove(6)
    assert 6 not in q.remaining
    assert q.buckets[0] == [5]
    with pytest.raises(KeyError):
        q.remove(6)
    assert q.at_or_worse(2) == [7, 8]
    assert q.best_nonempty_index() == 1
    q.remove(5)
    assert q.best_nonempty_index() == 2


def _profile_2x2():
    return PreferenceProfile.from_lists([[0, 1], [0, 1]], [[0, 1], [0, 1]])


def test_rank_lookup():
    prof = PreferenceProfile.from_lists([[2, 0, 1], [0], [1, 2]], [[1, 0], [0, 2], [0, 2]])
    assert rank(prof, man(0), woman(1)) == 3
    assert rank(prof, man(0), woman(2)) == 1
    assert rank(prof, man(1), woman(2)) is None
    assert rank(prof, man(1), woman(0)) == 1
    assert rank(prof, woman(2), man(0)) == 1
    with pytest.raises(InvalidProfile):
        rank(prof, man(0), man(1))


def test_rank_position_example():
    # list [3, 1, 2]: woman 1 sits in position 2; a single-entry list ranks
    # its only partner first
    prof = PreferenceProfile.from_lists(
        [[3, 1, 2], [], [], [7], [], [], [], []],
        [[], [0], [0], [0], [], [], [], [3]],
    )
    assert rank(prof, man(0), woman(1)) == 2
    assert rank(prof, man(0), woman(0)) is None
    assert rank(prof, man(3), woman(7)) == 1


def test_profile_validation_errors():
    with pytest.raises(InvalidProfile, match="asymmetric"):
        PreferenceProfile.from_lists([[0]], [[]])
    with pytest.raises(InvalidProfile, match="twice"):
        PreferenceProfile.from_lists([[0, 0]], [[0]])
    with pytest.raises(InvalidProfile, match="out-of-range"):
        PreferenceProfile.from_lists([[3]], [[0]])
    with pytest.raises(InvalidProfile):
        PreferenceProfile(n=0, men_prefs=(), women_prefs=())


def test_degree_sums_match_edge_count():
    rng = random.Random(3)
    for _ in range(50):
        n = rng.randint(1, 10)
        mat = [[rng.random() < 0.5 for _ in range(n)] for _ in range(n)]
        men = [tuple(w for w in range(n) if mat[m][w]) for m in range(n)]
        women = [tuple(m for m in range(n) if mat[m][w]) for w in range(n)]
        prof = PreferenceProfile(n=n, men_prefs=tuple(men), women_prefs=tuple(women))
        assert sum(len(l) for l in prof.men_prefs) == prof.num_edges
        assert sum(len(l) for l in prof.women_prefs) == prof.num_edges
        assert prof.num_edges == len(list(prof.edges()))


def test_matching_rejects_duplicates():
    with pytest.raises(InvalidMatching):
        Matching.of([(0, 0), (0, 1)])
    with pytest.raises(InvalidMatching):
        Matching.of([(0, 0), (1, 0)])


def test_matching_validate_for_profile():
    prof = _profile_2x2()
    Matching.of([(0, 0), (1, 1)]).validate_for(prof)
    sparse = PreferenceProfile.from_lists([[0], []], [[0], []])
    with pytest.raises(InvalidMatching):
        Matching.of([(1, 1)]).validate_for(sparse)


def test_player_id_ordering_and_repr():
    assert man(3) < woman(0)
    assert repr(man(3)) == "M3"
    assert repr(woman(2)) == "W2"
    assert man(1).side is Side.MAN
