import math

import pytest
from hypothesis import given, strategies as st

from radimpress import label_report
from radimpress.similarity import (
    IndexEntry,
    LabelIndex,
    SearchConfig,
    SimilarityIndexError,
    euclidean_distance,
    sample_start,
    systematic_sample,
    top_k_similar,
)

from oracles import brute_force_top_k, random_label_vectors

vec = st.lists(st.sampled_from([-1, 0, 1, 2]), min_size=14, max_size=14)


def test_distance_examples():
    v = [2] * 14
    assert euclidean_distance(v, v) == 0.0
    assert euclidean_distance([1] + [0] * 13, [0] * 14) == 1.0


def test_distance_between_fixture_reports(synthetic_corpus):
    by_id = {r.id: r for r in synthetic_corpus}
    a = label_report(by_id["S-004"].findings)  # right effusion
    b = label_report(by_id["S-012"].findings)  # cardiomegaly + edema + effusions
    assert a == (2, 2, 2, 2, 2, 2, 2, 2, 2, 0, 1, 2, 2, 2)
    assert b == (2, 2, 1, 2, 2, 1, 2, 2, 2, 0, 1, 2, 2, 2)
    # codes differ at c and f by 1 each: sqrt(1 + 1)
    assert euclidean_distance(a, b) == pytest.approx(math.sqrt(2))


def test_distance_rejects_wrong_length():
    with pytest.raises(ValueError):
        euclidean_distance([0] * 13, [0] * 13)


@given(vec, vec, vec)
def test_metric_axioms(a, b, c):
    assert euclidean_distance(a, b) == euclidean_distance(b, a)
    assert (euclidean_distance(a, b) == 0) == (a == b)
    assert euclidean_distance(a, c) <= euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-12


def _entries(n):
    return [IndexEntry(f"r{i}", tuple([i % 3] * 14)) for i in range(n)]


def test_systematic_full_sample():
    e = _entries(10)
    for seed in range(5):
        assert systematic_sample(e, 10, seed) == e


def test_systematic_stride_trace():
    seed = next(s for s in range(100) if sample_start(2, s) == 1)
    picked = systematic_sample(_entries(10), 5, seed)
    assert [x.report_id for x in picked] == ["r1", "r3", "r5", "r7", "r9"]


def test_systematic_invalid_sizes():
    with pytest.raises(ValueError):
        systematic_sample(_entries(10), 0, 0)
    with pytest.raises(ValueError):
        systematic_sample(_entries(10), 11, 0)


@given(st.integers(1, 200), st.integers(1, 50), st.integers(0, 2**32))
def test_systematic_properties(n, m, seed):
    if m > n:
        return
    e = _entries(n)
    a = systematic_sample(e, m, seed)
    assert a == systematic_sample(e, m, seed)
    assert len(a) == m
    pos = [int(x.report_id[1:]) for x in a]
    k = n // m
    assert pos[0] < k and all(q - p == k for p, q in zip(pos, pos[1:]))


def test_exact_match_top1():
    entries = [IndexEntry("a", (2,) * 14), IndexEntry("b", (1,) * 14)]
    assert top_k_similar((1,) * 14, entries, SearchConfig(n_similar=1)) == [("b", 0.0)]


def test_tie_break_by_insertion_order():
    entries = [IndexEntry("first", (1,) + (2,) * 13), IndexEntry("second", (0,) + (2,) * 13)]
    hits = top_k_similar((2,) * 14, entries, SearchConfig(n_similar=2))
    assert [h[0] for h in hits] == ["first", "second"]
    assert hits[0][1] == hits[1][1] or hits[0][1] < hits[1][1]


def test_self_exclusion():
    entries = [IndexEntry("q", (2,) * 14), IndexEntry("x", (1,) * 14)]
    hits = top_k_similar((2,) * 14, entries, SearchConfig(n_similar=1), query_id="q")
    assert hits == [("x", math.sqrt(14))]


def test_insufficient_index():
    with pytest.raises(SimilarityIndexError):
        top_k_similar((2,) * 14, _entries(3), SearchConfig(n_similar=4))
    with pytest.raises(SimilarityIndexError):
        top_k_similar((2,) * 14, _entries(3), SearchConfig(n_similar=3), query_id="r0")


def test_search_config_invariants():
    with pytest.raises(ValueError):
        SearchConfig(n_similar=0)
    with pytest.raises(ValueError):
        SearchConfig(n_similar=5, subset_size=4)


@pytest.mark.parametrize("k", [1, 5, 15])
def test_matches_bruteforce_random(k):
    vectors = random_label_vectors(1000, seed=11)
    ids = [f"v{i}" for i in range(1000)]
    index = LabelIndex(IndexEntry(i, tuple(v)) for i, v in zip(ids, vectors))
    for q in random_label_vectors(20, seed=12):
        got = top_k_similar(tuple(q), index, SearchConfig(n_similar=k))
        want = brute_force_top_k(ids, vectors, q, k)
        assert [g[0] for g in got] == [w[0] for w in want]
        assert [g[1] for g in got] == pytest.approx([w[1] for w in want])


@given(st.integers(20, 300), st.integers(1, 20), st.integers(0, 1000))
def test_oracle_equivalence_property(n, k, seed):
    k = min(k, n - 1)
    vectors = random_label_vectors(n, seed)
    ids = [f"v{i}" for i in range(n)]
    index = LabelIndex(IndexEntry(i, tuple(v)) for i, v in zip(ids, vectors))
    q = vectors[seed % n]
    got = index.search(q, k, exclude_id=ids[seed % n])
    assert [g[0] for g in got] == [w[0] for w in brute_force_top_k(ids, vectors, q, k, exclude=ids[seed % n])]
    d = [g[1] for g in got]
    assert d == sorted(d) and len(got) == k


def test_subset_is_fixed_per_seed():
    vectors = random_label_vectors(500, seed=5)
    index = LabelIndex(IndexEntry(f"v{i}", tuple(v)) for i, v in enumerate(vectors))
    cfg = SearchConfig(n_similar=5, subset_size=50, seed=9)
    sub = index.subset(cfg)
    assert len(sub) == 50 and sub is index.subset(cfg)
    allowed = {e.report_id for e in sub.entries}
    hits = top_k_similar(tuple(vectors[0]), index, cfg)
    assert {h[0] for h in hits} <= allowed


def test_tsv_roundtrip(tmp_path):
    vectors = random_label_vectors(30, seed=1)
    index = LabelIndex(IndexEntry(f"v{i}", tuple(int(x) for x in v)) for i, v in enumerate(vectors))
    p = tmp_path / "labels.tsv"
    index.save_tsv(p)
    header = p.read_text().splitlines()[0].split("\t")
    assert header == ["report_id", *"abcdefghijklmn"]
    again = LabelIndex.load_tsv(p)
    assert again.entries == index.entries


def test_tsv_rejects_bad_codes(tmp_path):
    p = tmp_path / "labels.tsv"
    p.write_text("report_id\t" + "\t".join("abcdefghijklmn") + "\nx\t" + "\t".join(["3"] * 14) + "\n")
    with pytest.raises(ValueError, match=":2:"):
        LabelIndex.load_tsv(p)
