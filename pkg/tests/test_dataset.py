import numpy as np
import pytest
from hypothesis import given, strategies as st

from gdmsr.dataset import (FAKE, OBSERVED, DataError, FilterConfig, SocialGraph, SplitConfig, build_dataset,
                           co_interaction_stats, filter_interactions, inject_fake_relations, load_dataset,
                           load_prepared, save_prepared, split_pairs, synthetic_raw, to_csr, write_stats_csv)

from conftest import make_dataset

LOOSE = FilterConfig(min_user_interactions=1, min_item_interactions=1, min_friends=0)


def write(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


# ------------------------------------------------------------------ loading


def test_low_rating_rows_are_dropped(tmp_path):
    inter = write(tmp_path / "i.tsv", ["# user item rating", "a\tx\t5", "a\ty\t3", "b\tx\t4"])
    social = write(tmp_path / "s.tsv", ["a\tb"])
    d, g = load_dataset(inter, social, LOOSE, SplitConfig(1.0, 0.0, 0.0))
    assert d.item_ids == ["x"]
    assert len(d.all_pairs()) == 2
    assert g.n_edges == 2 and g.undirected_count() == 1


def test_missing_ratings_keep_all_rows(tmp_path):
    inter = write(tmp_path / "i.tsv", ["a\tx", "a\ty", "b\tx"])
    social = write(tmp_path / "s.tsv", [])
    d, g = load_dataset(inter, social, LOOSE, SplitConfig(1.0, 0.0, 0.0))
    assert len(d.all_pairs()) == 3
    assert g.n_edges == 0


def test_unparseable_line_reports_line_number(tmp_path):
    inter = write(tmp_path / "i.tsv", ["a\tx\t5", "broken-line"])
    social = write(tmp_path / "s.tsv", [])
    with pytest.raises(DataError, match=r"i.tsv:2"):
        load_dataset(inter, social, LOOSE)


def test_non_numeric_rating_reports_line_number(tmp_path):
    inter = write(tmp_path / "i.tsv", ["a\tx\tfive"])
    with pytest.raises(DataError, match=r":1: rating"):
        load_dataset(inter, write(tmp_path / "s.tsv", []), LOOSE)


def test_empty_after_filtering_is_an_error():
    with pytest.raises(DataError, match="empty"):
        build_dataset([("a", "x", 1.0)], [], LOOSE)


def test_social_edges_to_removed_users_are_dropped():
    rows = [("a", "x"), ("a", "y"), ("b", "x"), ("b", "y"), ("c", "x")]
    cfg = FilterConfig(min_user_interactions=2, min_item_interactions=1, min_friends=0)
    d, g = build_dataset(rows, [("a", "b"), ("a", "c")], cfg, SplitConfig(1.0, 0.0, 0.0))
    assert d.user_ids == ["a", "b"]
    assert g.undirected_count() == 1


def test_ids_remap_numerically_when_numeric():
    rows = [("10", "5"), ("9", "5"), ("100", "7")]
    d, _ = build_dataset(rows, [], LOOSE, SplitConfig(1.0, 0.0, 0.0))
    assert d.user_ids == ["9", "10", "100"]
    assert d.item_ids == ["5", "7"]


@st.composite
def raw_pairs(draw):
    pairs = draw(st.sets(st.tuples(st.integers(0, 12), st.integers(0, 12)), min_size=1, max_size=80))
    social = draw(st.sets(st.tuples(st.integers(0, 12), st.integers(0, 12)), max_size=40))
    return {(f"u{a}", f"i{b}") for a, b in pairs}, {(f"u{a}", f"u{b}") for a, b in social if a < b}


@given(raw_pairs(), st.integers(1, 4), st.integers(1, 4), st.integers(0, 3))
def test_filter_reaches_fixpoint(raw, mu, mi, mf):
    cfg = FilterConfig(mu, mi, mf)
    pairs, social = filter_interactions(*raw, cfg)
    again = filter_interactions(pairs, social, cfg)
    assert again == (pairs, social)


@given(st.integers(1, 40), st.integers(0, 2**31))
def test_split_is_a_partition(n_users, seed):
    r = np.random.default_rng(seed)
    pairs = np.unique(np.column_stack([r.integers(0, n_users, 200), r.integers(0, 30, 200)]), axis=0)
    tr, va, te = split_pairs(pairs, n_users, SplitConfig(), seed)
    joined = np.concatenate([tr, va, te])
    assert len(joined) == len(pairs)
    assert {tuple(p) for p in joined.tolist()} == {tuple(p) for p in pairs.tolist()}
    assert set(np.unique(pairs[:, 0]).tolist()) <= set(tr[:, 0].tolist())


def test_split_rounding_on_ten_items():
    pairs = np.column_stack([np.zeros(10, np.int64), np.arange(10)])
    tr, va, te = split_pairs(pairs, 1, SplitConfig(), 0)
    assert (len(tr), len(va), len(te)) == (8, 1, 1)


def test_dataset_invariants_on_synthetic():
    inter, social = synthetic_raw(n_users=120, n_items=200, seed=3)
    d, g = build_dataset([(u, i, float(r)) for u, i, r in inter], social, seed=1)
    assert np.all(np.diff(d.user_indptr) >= 1)
    assert d.popularity.sum() == len(d.train)
    for part in (d.train, d.valid, d.test):
        assert part[:, 0].max() < d.n_users and part[:, 1].max() < d.n_items
    keys = [set(map(tuple, p.tolist())) for p in (d.train, d.valid, d.test)]
    assert not (keys[0] & keys[1]) and not (keys[0] & keys[2]) and not (keys[1] & keys[2])


# ------------------------------------------------------------- social graph


@given(st.sets(st.tuples(st.integers(0, 9), st.integers(0, 9)).filter(lambda t: t[0] != t[1]), max_size=40))
def test_csr_round_trip(edges):
    edges = sorted(edges)
    src = np.array([a for a, _ in edges], dtype=np.int64)
    dst = np.array([b for _, b in edges], dtype=np.int64)
    g = SocialGraph(10, src, dst)
    rebuilt = sorted(zip(np.repeat(np.arange(10), np.diff(g.indptr)).tolist(), g.indices.tolist()))
    assert rebuilt == edges


def test_two_users_zero_edges():
    g = SocialGraph(2, [], [])
    assert g.n_edges == 0 and g.out_degree().tolist() == [0, 0]


@pytest.mark.parametrize("src,dst,msg", [([0], [0], "self-loop"), ([0, 0], [1, 1], "duplicate"),
                                         ([0], [5], "range")])
def test_graph_rejects_bad_edges(src, dst, msg):
    with pytest.raises(DataError, match=msg):
        SocialGraph(3, src, dst)


def test_undirected_input_is_stored_both_ways():
    g = SocialGraph.from_undirected(3, [[0, 1], [1, 2]])
    assert sorted(zip(g.src.tolist(), g.indices.tolist())) == [(0, 1), (1, 0), (1, 2), (2, 1)]


def test_provenance_is_read_only():
    g = SocialGraph.from_undirected(3, [[0, 1]])
    with pytest.raises(ValueError):
        g.provenance[0] = FAKE


def test_to_csr_offsets_are_monotone():
    indptr, _ = to_csr(np.array([2, 0, 2]), np.array([1, 1, 0]), 4)
    assert indptr.tolist() == [0, 1, 1, 3, 3]


def test_prepared_round_trip(tmp_path):
    d = make_dataset(3, 4, [(0, 0), (1, 1), (2, 3)], valid=[(0, 2)], test=[(1, 3)])
    g = SocialGraph.from_undirected(3, [[0, 1]])
    save_prepared(tmp_path / "p.npz", d, g)
    d2, g2 = load_prepared(tmp_path / "p.npz")
    np.testing.assert_array_equal(d2.train, d.train)
    np.testing.assert_array_equal(d2.test, d.test)
    np.testing.assert_array_equal(g2.indices, g.indices)


# ----------------------------------------------------------- fake relations


def _ring(n):
    return SocialGraph.from_undirected(n, [[k, (k + 1) % n] for k in range(n)])


def test_inject_equal_count_disjoint_no_self_loops():
    base = SocialGraph.from_undirected(60, np.column_stack([np.arange(50), np.arange(50) + 10]))
    g = inject_fake_relations(base, seed=4)
    assert base.undirected_count() == 50
    fake = g.provenance == FAKE
    assert int(fake.sum()) == 100  # 50 undirected, stored both ways
    observed = set(zip(base.src.tolist(), base.indices.tolist()))
    fakes = set(zip(g.src[fake].tolist(), g.indices[fake].tolist()))
    assert not (observed & fakes)
    assert all(a != b for a, b in fakes)
    assert int((g.provenance == OBSERVED).sum()) == base.n_edges


def test_inject_is_deterministic():
    g = _ring(30)
    a, b = inject_fake_relations(g, 9), inject_fake_relations(g, 9)
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_array_equal(a.provenance, b.provenance)


def test_inject_into_complete_graph_fails():
    g = SocialGraph.from_undirected(5, [[a, b] for a in range(5) for b in range(a + 1, 5)])
    with pytest.raises(DataError, match="dense"):
        inject_fake_relations(g, 0)


# --------------------------------------------------------------- statistics


def test_co_interaction_half():
    d = make_dataset(3, 3, [(0, 0), (0, 1), (1, 0), (2, 2)])
    g = SocialGraph.from_undirected(3, [[0, 1], [0, 2]])
    users, ratios = co_interaction_stats(d, g)
    assert dict(zip(users.tolist(), ratios.tolist()))[0] == 0.5


def test_co_interaction_all_shared_is_one_and_isolated_omitted(tmp_path):
    d = make_dataset(3, 2, [(0, 0), (1, 0), (2, 1)])
    g = SocialGraph.from_undirected(3, [[0, 1]])
    users, ratios = co_interaction_stats(d, g)
    assert users.tolist() == [0, 1] and ratios.tolist() == [1.0, 1.0]
    write_stats_csv(tmp_path / "s.csv", users, ratios)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "user_index,ratio"
