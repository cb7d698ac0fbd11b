import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import lpa_fixed_points
from polarlens.catalog import Dimension
from polarlens.corpus import TweetRecord
from polarlens.graph import (
    GraphError,
    RetweetGraph,
    SeedSet,
    build_graph,
    holdout_eval,
    load_seeds,
    propagate_labels,
    write_labels,
    write_seeds,
)
from polarlens.synth import planted_partition_graph
from datetime import datetime, timezone

T0 = datetime(2020, 3, 1, tzinfo=timezone.utc)


def rt(src, dst, i=0):
    return TweetRecord(f"{src}-{dst}-{i}", src, T0, "", retweeted_user_id=dst)


def two_cliques():
    edges = {}
    for base in (0, 5):
        for a in range(base, base + 5):
            for b in range(a + 1, base + 5):
                edges[(f"v{a}", f"v{b}")] = 1
    edges[("v4", "v5")] = 1
    return RetweetGraph.from_edges(edges)


# --- build_graph -----------------------------------------------------------------


def test_repeated_retweets_collapse_to_weight():
    g = build_graph([rt("u1", "u2", i) for i in range(3)])
    assert g.n_edges == 1 and g.weight.tolist() == [3.0]
    assert (g.nodes[g.src[0]], g.nodes[g.dst[0]]) == ("u1", "u2")


def test_self_retweet_dropped():
    g = build_graph([rt("u1", "u1")])
    assert g.n_edges == 0 and g.nodes == ["u1"]


def test_empty_stream():
    g = build_graph([])
    assert g.n_nodes == 0 and g.n_edges == 0
    assert g.stats()["nodes"] == 0


def test_graph_round_trip(tmp_path):
    g = RetweetGraph.from_edges({("a", "b"): 2, ("b", "c"): 1234567, ("c", "a"): 1}, nodes=["z"])
    g.save(tmp_path / "g.tsv")
    h = RetweetGraph.load(tmp_path / "g.tsv")
    assert h.nodes == g.nodes
    assert np.array_equal(h.src, g.src) and np.array_equal(h.dst, g.dst) and np.array_equal(h.weight, g.weight)


def test_stats():
    st_ = build_graph([rt("a", "b"), rt("b", "a"), rt("c", "a"), rt("c", "a", 1)]).stats()
    assert st_ == {"nodes": 3, "edges": 3, "retweets": 4, "max_in_degree": 2, "max_out_degree": 1, "largest_scc": 2}


# --- seeds ---------------------------------------------------------------------------


def test_load_seeds(tmp_path):
    p = tmp_path / "science.tsv"
    p.write_text("@CDCgov\tpro_science\nquack\tanti_science\n")
    g = RetweetGraph.from_edges({("CDCgov", "x"): 1})
    seeds = load_seeds(p, "science", g)
    assert seeds.label_of == {"CDCgov": 1, "quack": -1}
    assert seeds.missing == {"quack"}


def test_unknown_seed_label(tmp_path):
    p = tmp_path / "s.tsv"
    p.write_text("a\tcentrist\n")
    with pytest.raises(GraphError):
        load_seeds(p, "political")


def test_conflicting_seed(tmp_path):
    p = tmp_path / "s.tsv"
    p.write_text("a\tliberal\na\tconservative\n")
    with pytest.raises(GraphError):
        load_seeds(p, "political")


def test_seed_round_trip(tmp_path):
    s = SeedSet(Dimension.MODERACY, {"a": 1, "b": -1})
    write_seeds(tmp_path / "m.tsv", s)
    assert load_seeds(tmp_path / "m.tsv", Dimension.MODERACY).label_of == s.label_of


# --- propagate_labels ----------------------------------------------------------------


def test_two_cliques_match_bruteforce_fixed_point():
    g = two_cliques()
    seeds = SeedSet(Dimension.SCIENCE, {"v0": 1, "v9": -1})
    res = propagate_labels(g, seeds, rng_seed=3)
    expected = tuple([1] * 5 + [-1] * 5)
    got = tuple(res.labels[f"v{i}"] for i in range(10))
    assert got == expected
    edges = [(int(a), int(b)) for a, b in zip(g.src, g.dst)]
    fixed = lpa_fixed_points(10, edges, {0: 1, 9: -1})
    assert expected in fixed
    assert res.converged


@pytest.mark.parametrize("seed", range(5))
def test_seed_with_opposite_neighbours_keeps_label(seed):
    g = RetweetGraph.from_edges({("s", "a"): 1, ("s", "b"): 1, ("a", "t"): 1, ("b", "t"): 1, ("u", "a"): 1})
    seeds = SeedSet(Dimension.SCIENCE, {"s": 1, "t": -1, "u": -1})
    res = propagate_labels(g, seeds, rng_seed=seed)
    assert res.labels["s"] == 1 and res.labels["t"] == -1


def test_isolated_node_stays_unlabeled():
    g = RetweetGraph.from_edges({("a", "b"): 1}, nodes=["lonely"])
    res = propagate_labels(g, SeedSet(Dimension.SCIENCE, {"a": 1}))
    assert "lonely" not in res.labels and res.labels["b"] == 1


def test_no_seeds_in_graph_is_error():
    g = RetweetGraph.from_edges({("a", "b"): 1})
    with pytest.raises(GraphError):
        propagate_labels(g, SeedSet(Dimension.SCIENCE, {"zz": 1}))


def test_weighted_majority():
    g = RetweetGraph.from_edges({("x", "p"): 3, ("x", "n1"): 1, ("x", "n2"): 1})
    res = propagate_labels(g, SeedSet(Dimension.SCIENCE, {"p": 1, "n1": -1, "n2": -1}))
    assert res.labels["x"] == 1


def test_directed_mode_follows_retweeted_account():
    # a retweets s; labels flow from s to a but not from a's retweeter... b is retweeted by nobody labeled
    g = RetweetGraph.from_edges({("a", "s"): 1, ("s", "b"): 1})
    res = propagate_labels(g, SeedSet(Dimension.SCIENCE, {"s": 1}), treat_edges="directed")
    assert res.labels.get("a") == 1 and "b" not in res.labels
    und = propagate_labels(g, SeedSet(Dimension.SCIENCE, {"s": 1}))
    assert und.labels["b"] == 1


def test_unknown_edge_mode():
    with pytest.raises(GraphError):
        propagate_labels(two_cliques(), SeedSet(Dimension.SCIENCE, {"v0": 1}), treat_edges="both")


_edges = st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11), st.integers(1, 3)), max_size=40)


@given(_edges, st.dictionaries(st.integers(0, 11), st.sampled_from([-1, 1]), min_size=1, max_size=4), st.integers(0, 100))
def test_lpa_invariants(edges, seeds, rng):
    g = RetweetGraph.from_arrays(12, [e[0] for e in edges], [e[1] for e in edges], [e[2] for e in edges])
    seedset = SeedSet(Dimension.SCIENCE, {g.nodes[i]: v for i, v in seeds.items()})
    a = propagate_labels(g, seedset, max_iter=30, rng_seed=rng)
    b = propagate_labels(g, seedset, max_iter=30, rng_seed=rng)
    assert a.labels == b.labels and a.changes == b.changes
    for u, v in seedset.label_of.items():
        assert a.labels[u] == v
    assert a.iterations <= 30
    if a.converged:
        assert a.changes[-1] == 0
    # swapping edge direction leaves undirected propagation unchanged
    flipped = RetweetGraph.from_arrays(12, [e[1] for e in edges], [e[0] for e in edges], [e[2] for e in edges])
    assert propagate_labels(flipped, seedset, max_iter=30, rng_seed=rng).labels == a.labels


@given(_edges, st.integers(0, 50))
def test_converged_labeling_is_a_majority_fixed_point(edges, rng):
    g = RetweetGraph.from_arrays(12, [e[0] for e in edges], [e[1] for e in edges], [e[2] for e in edges])
    seeds = SeedSet(Dimension.SCIENCE, {g.nodes[0]: 1, g.nodes[11]: -1})
    res = propagate_labels(g, seeds, rng_seed=rng)
    if not res.converged:
        return
    m = g.influence_matrix().toarray()
    lab = np.array([res.labels.get(u, 0) for u in g.nodes])
    for v in range(12):
        if g.nodes[v] in seeds.label_of or lab[v] == 0:
            continue
        pos = m[v][lab == 1].sum()
        neg = m[v][lab == -1].sum()
        assert (lab[v] == 1 and pos >= neg) or (lab[v] == -1 and neg >= pos)


# --- holdout_eval ----------------------------------------------------------------------


def test_pole_pure_components_give_perfect_holdout():
    g, block = planted_partition_graph([60, 60], 0.3, 0.0, rng_seed=1)
    seeds = SeedSet(Dimension.POLITICAL, {g.nodes[i]: (1 if block[i] == 0 else -1) for i in range(0, 120, 4)})
    rep = holdout_eval(g, seeds, folds=5, rng_seed=0)
    assert rep.accuracy == 1.0 and rep.recall == 1.0 and rep.n == 30


def test_no_edges_gives_zero_recall():
    nodes = [f"n{i}" for i in range(20)]
    g = RetweetGraph.from_edges({}, nodes)
    seeds = SeedSet(Dimension.SCIENCE, {u: (1 if i % 2 else -1) for i, u in enumerate(nodes)})
    rep = holdout_eval(g, seeds, folds=5)
    assert rep.recall == 0 and rep.accuracy == 0


def test_too_few_seeds_for_folds():
    g = two_cliques()
    with pytest.raises(GraphError):
        holdout_eval(g, SeedSet(Dimension.SCIENCE, {"v0": 1, "v9": -1}), folds=5)


def test_missing_seeds_noted():
    g, block = planted_partition_graph([30, 30], 0.3, 0.0, rng_seed=2)
    label_of = {g.nodes[i]: (1 if block[i] == 0 else -1) for i in range(0, 60, 3)}
    label_of["ghost"] = 1
    rep = holdout_eval(g, SeedSet(Dimension.SCIENCE, label_of), folds=5)
    assert rep.n == 20 and rep.notes


def test_write_labels(tmp_path):
    write_labels(tmp_path / "l.csv", {"b": -1, "a": 1}, Dimension.SCIENCE)
    assert (tmp_path / "l.csv").read_text().splitlines() == [
        "user_id,dim,pole,label",
        "a,science,1,pro_science",
        "b,science,-1,anti_science",
    ]
