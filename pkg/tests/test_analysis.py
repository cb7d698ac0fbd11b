from collections import Counter
from datetime import date, datetime, timezone
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import cumulative_path, drift_bruteforce, histogram2d_bruteforce
from polarlens.analysis import (
    GROUPS,
    AnalysisError,
    BiweeklySpec,
    IdeologyGroup,
    assign_group,
    assign_groups,
    cumulative_paths,
    delta_series,
    drift_table,
    group_activity_series,
    score_heatmap,
    state_fractions,
    top_group_hashtags,
)
from polarlens.bow import SparseFeatures
from polarlens.catalog import DimScore, Dimension, DomainCatalog
from polarlens.corpus import UserAggregate
from polarlens.embed import DocEmbedding
from polarlens.features import FeatureMatrix
from polarlens.lda import AffinityVector

G = IdeologyGroup

paths_st = st.integers(2, 8).flatmap(
    lambda T: st.lists(
        st.lists(st.fractions(-1, 1, max_denominator=20).map(float), min_size=T, max_size=T), min_size=1, max_size=30
    )
)


# --- drift ---------------------------------------------------------------------------------


@given(paths_st)
def test_delta_matches_bruteforce(paths):
    got = delta_series(paths)
    want = drift_bruteforce(paths)
    assert np.allclose(got, want, rtol=0, atol=1e-12)
    assert all(0 <= v <= 2 for v in got)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.integers(2, 9))
def test_constant_paths_have_zero_drift(levels, T):
    assert delta_series([[v] * T for v in levels]) == [0.0] * (T - 1)


def test_single_user_hand_value():
    assert delta_series({"a": [1.0, 0.0, 0.5]}) == [1.0, 0.5]


@pytest.mark.parametrize("bad", [[], [[0.1]]])
def test_delta_rejects_degenerate(bad):
    with pytest.raises(AnalysisError):
        delta_series(bad)


def _agg(uid, per_bucket, tweets=None, hashtags=None, state=None):
    domains = Counter()
    for c in per_bucket.values():
        domains.update(c)
    return UserAggregate(
        uid,
        hashtag_counts=Counter(hashtags or {}),
        shared_domains=domains,
        state=state,
        per_bucket_domains={b: Counter(c) for b, c in per_bucket.items()},
        per_bucket_tweets=tweets or {b: 1 for b in per_bucket},
    )


CAT = DomainCatalog(Dimension.SCIENCE, {"p.org": 1, "q.org": 1, "n.com": -1})
SPEC3 = BiweeklySpec(((date(2020, 1, 1), date(2020, 1, 10)), (date(2020, 1, 11), date(2020, 1, 20)), (date(2020, 1, 21), date(2020, 1, 31))))


def test_cumulative_paths_against_oracle():
    aggs = {
        "a": _agg("a", {1: {"p.org": 2}, 2: {"n.com": 1, "x.net": 4}, 3: {"q.org": 1, "n.com": 2}}),
        "b": _agg("b", {1: {"p.org": 1}, 3: {"n.com": 1}}),  # gap in bucket 2
        "c": _agg("c", {1: {"x.net": 1}, 2: {"p.org": 1}, 3: {"p.org": 1}}),  # unmatched bucket 1
    }
    paths, counts = cumulative_paths(aggs, CAT, SPEC3)
    assert list(paths) == ["a"]
    assert counts["a"] == [2, 1, 3]
    want = cumulative_path([[1, 1], [-1], [1, -1, -1]])
    assert np.allclose(paths["a"], want, atol=1e-15)
    assert paths["a"][-1] == pytest.approx(0 / 6 * 1 + (2 - 1 + 1 - 2) / 6)
    table = drift_table(aggs, {Dimension.SCIENCE: CAT}, SPEC3)
    n, d = table[Dimension.SCIENCE]
    assert n == 1 and np.allclose(d, drift_bruteforce([want]))


@given(st.lists(st.lists(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=6), min_size=4, max_size=4), min_size=1, max_size=20))
def test_cumulative_drift_contraction(users):
    # the t-th step of a cumulative mean moves at most 2 * n_t / N_t
    paths = [cumulative_path(u) for u in users]
    d = delta_series(paths)
    for t in range(1, 4):
        bound = sum(2 * len(u[t]) / sum(len(b) for b in u[: t + 1]) for u in users) / len(users)
        assert d[t - 1] <= bound + 1e-12


# --- buckets -------------------------------------------------------------------------------


def test_default_buckets_cover_the_window():
    spec = BiweeklySpec.default()
    assert len(spec) == 7 and list(spec.buckets) == list(range(1, 8))
    assert spec.bucket_of(date(2020, 1, 21)) == 1
    assert spec.bucket_of(date(2020, 2, 29)) == 3
    assert spec.bucket_of(date(2020, 5, 1)) == 7
    assert spec.bucket_of(date(2020, 5, 2)) is None
    assert spec.bucket_of(datetime(2020, 3, 17, 3, tzinfo=timezone.utc)) == 5


@pytest.mark.parametrize(
    "intervals",
    [
        (),
        ((date(2020, 1, 5), date(2020, 1, 1)),),
        ((date(2020, 1, 1), date(2020, 1, 5)), (date(2020, 1, 5), date(2020, 1, 9))),
    ],
)
def test_bad_intervals(intervals):
    with pytest.raises(AnalysisError):
        BiweeklySpec(intervals)


# --- groups ------------------------------------------------------------------------------------


@pytest.mark.parametrize(
    "labels,want",
    [
        ((1, 1, None), G.PROSCI_MODERATE),
        ((1, 1, -1), G.PROSCI_MODERATE),
        ((-1, -1, 1), G.ANTISCI_RIGHT),
        ((1, -1, -1), G.PROSCI_LEFT),
        ((-1, 1, 1), G.ANTISCI_MODERATE),
        ((1, -1, None), None),
        ((None, 1, 1), None),
    ],
)
def test_assign_group(labels, want):
    assert assign_group(*labels) == want


@given(st.sampled_from([1, -1, None]), st.sampled_from([1, -1, None]), st.sampled_from([1, -1, None]))
def test_assign_group_is_total_on_complete_labels(s, m, p):
    g = assign_group(s, m, p)
    complete = s is not None and m is not None and (m == 1 or p is not None)
    assert (g is not None) == complete
    if g is not None:
        assert g.value.startswith("ProSci" if s == 1 else "AntiSci")


def test_assign_groups_joins_dimensions():
    labels = {
        Dimension.SCIENCE: {"a": 1, "b": -1, "c": 1},
        Dimension.MODERACY: {"a": -1, "b": 1, "c": -1},
        Dimension.POLITICAL: {"a": 1},
    }
    assert assign_groups(labels) == {"a": G.PROSCI_RIGHT, "b": G.ANTISCI_MODERATE}


def test_activity_fractions():
    groups = {"a": G.PROSCI_LEFT, "b": G.PROSCI_LEFT, "c": G.ANTISCI_RIGHT, "d": G.ANTISCI_RIGHT}
    aggs = {
        "a": _agg("a", {}, tweets={1: 3, 2: 1}),
        "b": _agg("b", {}, tweets={1: 1}),
        "c": _agg("c", {}, tweets={1: 2, 3: 0}),
        "d": _agg("d", {}, tweets={}),
    }
    rows = group_activity_series(groups, aggs, SPEC3)
    assert [r.n for r in rows] == [3, 1, 0]
    assert rows[0].fractions[G.PROSCI_LEFT] == pytest.approx(2 / 3)
    assert rows[0].fractions[G.ANTISCI_RIGHT] == pytest.approx(1 / 3)
    assert rows[1].fractions[G.PROSCI_LEFT] == 1.0
    assert rows[2].flag == "empty" and rows[2].fractions == {}
    for r in rows[:2]:
        assert sum(r.fractions.values()) == pytest.approx(1, abs=1e-9)


def test_state_fractions_and_suppression():
    groups = {f"u{i}": GROUPS[i % 6] for i in range(60)}
    states = {f"u{i}": "CA" for i in range(60)}
    states.update({"u0": "TX", "u1": None})
    groups.update({"v": G.PROSCI_LEFT})
    rows = {r.key: r for r in state_fractions(groups, states, min_state_users=50)}
    assert rows["TX"].n == 1
    assert set(rows) == {"CA", "TX"}
    assert rows["TX"].flag == "suppressed" and rows["TX"].fractions == {} and rows["TX"].n == 1
    ca = rows["CA"]
    assert ca.n == 58 and ca.flag is None
    assert ca.fractions[GROUPS[0]] == pytest.approx(9 / 58)
    assert sum(ca.fractions.values()) == pytest.approx(1, abs=1e-9)


@given(st.dictionaries(st.text("abcdefgh", min_size=1, max_size=3), st.tuples(st.sampled_from(GROUPS), st.sampled_from(["CA", "NY"])), max_size=80), st.integers(1, 20))
def test_state_fractions_sum_to_one(users, threshold):
    groups = {u: g for u, (g, _) in users.items()}
    states = {u: s for u, (_, s) in users.items()}
    for r in state_fractions(groups, states, threshold):
        if r.flag is None:
            assert r.n >= threshold
            assert sum(r.fractions.values()) == pytest.approx(1, abs=1e-9)
        else:
            assert r.n < threshold


def test_top_hashtags_drop_universal_tags():
    groups = {f"u{i}": g for i, g in enumerate(GROUPS)}
    aggs = {}
    for i, g in enumerate(GROUPS):
        tags = {"covid": 10, f"own{i}": 5 - (i % 2), "shared": 1 if i < 3 else 0}
        aggs[f"u{i}"] = _agg(f"u{i}", {}, hashtags={k: v for k, v in tags.items() if v})
    out = top_group_hashtags(groups, aggs, k=3)
    assert out[GROUPS[0]] == [("own0", 5), ("shared", 1)]
    assert out[GROUPS[5]] == [("own5", 4)]
    assert all("covid" not in dict(v) for v in out.values())


def test_top_hashtags_tie_order():
    groups = {"a": G.PROSCI_LEFT}
    aggs = {"a": _agg("a", {}, hashtags={"b": 2, "a": 2, "c": 3})}
    # five empty groups make the common set empty
    assert top_group_hashtags(groups, aggs, k=2)[G.PROSCI_LEFT] == [("c", 3), ("a", 2)]


# --- heatmaps ------------------------------------------------------------------------------------


def _score(uid, dim, value):
    f = Fraction(value)
    return DimScore(uid, dim, f.numerator / f.denominator, f.denominator, pole_sum=f.numerator)


def _table(points):
    out = {}
    for i, (s, p, m) in enumerate(points):
        uid = f"u{i}"
        out[uid] = {
            Dimension.SCIENCE: _score(uid, Dimension.SCIENCE, s),
            Dimension.POLITICAL: _score(uid, Dimension.POLITICAL, p),
            Dimension.MODERACY: _score(uid, Dimension.MODERACY, m),
        }
    return out


score_st = st.fractions(-1, 1, max_denominator=12)


@given(st.lists(st.tuples(score_st, score_st, score_st), max_size=60), st.sampled_from([1, 2, 3, 5, 20]))
def test_heatmap_matches_bruteforce(points, bins):
    grids = score_heatmap(_table(points), bins)
    sci_pol = histogram2d_bruteforce([(s, p) for s, p, _ in points], bins)
    sci_mod = histogram2d_bruteforce([(s, m) for s, _, m in points], bins)
    assert grids[(Dimension.SCIENCE, Dimension.POLITICAL)].tolist() == sci_pol
    assert grids[(Dimension.SCIENCE, Dimension.MODERACY)].tolist() == sci_mod
    for g in grids.values():
        assert g.sum() == len(points)


def test_heatmap_five_user_toy():
    pts = [(1, -1, 1), (Fraction(1, 3), Fraction(-1, 3), -1), (0, 0, 0), (Fraction(-1, 2), 1, Fraction(1, 2)), (-1, -1, -1)]
    g = score_heatmap(_table(pts), 4)
    # edges at -1, -1/2, 0, 1/2, 1; cells closed on the left
    want_pol = np.zeros((4, 4), dtype=int)
    for r, c in [(3, 0), (2, 1), (2, 2), (1, 3), (0, 0)]:
        want_pol[r, c] += 1
    want_mod = np.zeros((4, 4), dtype=int)
    for r, c in [(3, 3), (2, 0), (2, 2), (1, 3), (0, 0)]:
        want_mod[r, c] += 1
    assert np.array_equal(g[(Dimension.SCIENCE, Dimension.POLITICAL)], want_pol)
    assert np.array_equal(g[(Dimension.SCIENCE, Dimension.MODERACY)], want_mod)


def test_heatmap_all_users_in_one_corner():
    g = score_heatmap(_table([(1, -1, -1)] * 7), 20)[(Dimension.SCIENCE, Dimension.POLITICAL)]
    assert g[19, 0] == 7 and g.sum() == 7


def test_heatmap_float_only_scores():
    t = {"a": {d: DimScore("a", d, 0.2, 0) for d in Dimension}}
    g = score_heatmap(t, 5)[(Dimension.SCIENCE, Dimension.POLITICAL)]
    assert g[3, 3] == 1


def test_heatmap_corners():
    g = score_heatmap(_table([(1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)]), 20)
    sp_ = g[(Dimension.SCIENCE, Dimension.POLITICAL)]
    assert sp_[19, 19] == 1 and sp_[0, 0] == 1
    sm = g[(Dimension.SCIENCE, Dimension.MODERACY)]
    assert sm[19, 0] == 1 and sm[0, 19] == 1


# --- feature matrices ------------------------------------------------------------------------------


def test_sparse_matrix_round_trip(tmp_path):
    feats = [SparseFeatures("a", (0, 3), (1.5, 2.0)), SparseFeatures("b", (2,), (1 / 3,))]
    fm = FeatureMatrix.from_sparse(feats, dim=5)
    fm.save(tmp_path / "f.csv")
    back = FeatureMatrix.load(tmp_path / "f.csv", dim=5)
    assert back.sparse and back.user_ids == ["a", "b"]
    assert (back.X != fm.X).nnz == 0


def test_dense_matrix_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    vecs = [AffinityVector(f"u{i}", rng.dirichlet(np.ones(4))) for i in range(5)]
    fm = FeatureMatrix.from_affinities(vecs)
    fm.save(tmp_path / "f.csv")
    back = FeatureMatrix.load(tmp_path / "f.csv", kind="lda")
    assert np.array_equal(back.X, fm.X) and back.user_ids == fm.user_ids


def test_rows_for_keeps_matrix_order():
    fm = FeatureMatrix.from_embeddings([DocEmbedding(u, np.full(2, i), 1) for i, u in enumerate("abc")])
    X, y, users = fm.rows_for({"c": 1, "a": 0})
    assert users == ["a", "c"] and y.tolist() == [0, 1] and X[:, 0].tolist() == [0, 2]


def test_state_share_example():
    groups = {f"u{i}": G.PROSCI_MODERATE if i < 10 else G.ANTISCI_LEFT for i in range(40)}
    rows = state_fractions(groups, {u: "OH" for u in groups}, min_state_users=40)
    assert rows[0].fractions[G.PROSCI_MODERATE] == 0.25


def test_two_state_toy_table():
    groups = {"a": G.PROSCI_LEFT, "b": G.PROSCI_LEFT, "c": G.ANTISCI_RIGHT, "d": G.PROSCI_MODERATE, "e": G.ANTISCI_RIGHT}
    states = {"a": "NY", "b": "NY", "c": "NY", "d": "TX", "e": "TX"}
    rows = {r.key: r for r in state_fractions(groups, states, min_state_users=2)}
    assert rows["NY"].n == 3 and rows["NY"].fractions[G.PROSCI_LEFT] == pytest.approx(2 / 3)
    assert rows["NY"].fractions[G.ANTISCI_RIGHT] == pytest.approx(1 / 3)
    assert rows["TX"].fractions[G.PROSCI_MODERATE] == 0.5 and rows["TX"].fractions[G.ANTISCI_RIGHT] == 0.5
    assert rows["TX"].fractions[G.PROSCI_LEFT] == 0.0
