import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from datawa.core import Location, Task, TravelModel, Worker
from datawa.depgraph import WDG, build_forest, build_tree, build_wdg, mcs_order, mcs_partition
from datawa.seqplan import build_catalogs

from oracles import induced_chordless_cycle, random_graph


def to_nx(g: WDG) -> nx.Graph:
    h = nx.Graph()
    h.add_nodes_from(g.nodes)
    h.add_edges_from(g.edges())
    return h


def test_oracle_finds_a_square():
    square = {1: {2, 4}, 2: {1, 3}, 3: {2, 4}, 4: {1, 3}}
    assert induced_chordless_cycle(square) == (1, 2, 3, 4)
    square[1].add(3)
    square[3].add(1)
    assert induced_chordless_cycle(square) is None


def test_wdg_edges_follow_shared_reachable_tasks():
    m = TravelModel(1.0)
    ws = [Worker(1, Location(0, 0), 1.5, 0, 99), Worker(2, Location(2, 0), 1.5, 0, 99),
          Worker(3, Location(9, 9), 1.0, 0, 99)]
    tasks = {1: Task(1, Location(1, 0), 0, 99)}
    g = build_wdg([1, 2, 3], build_catalogs(ws, tasks, 0.0, m))
    assert g.edges() == [(1, 2)]
    assert g.components() == [[1, 2], [3]]


def test_mcs_breaks_ties_by_lowest_id():
    g = WDG.from_edges([1, 2, 3, 4], [(3, 4), (1, 2)])
    assert mcs_order(g) == [1, 2, 3, 4]


def test_cycle_gets_one_fill_edge_and_two_triangles():
    g = WDG.from_edges(range(1, 5), [(1, 2), (2, 3), (3, 4), (4, 1)])
    x = mcs_partition(g)
    assert len(x.fill_edges) == 1
    assert sorted(map(len, x.cliques)) == [3, 3]
    assert nx.is_chordal(to_nx(x.chordal_graph(g)))


def test_cliques_are_maximal_cliques_of_the_completed_graph():
    rng = np.random.default_rng(5)
    for _ in range(30):
        g = WDG(random_graph(rng, 9, 0.35))
        x = mcs_partition(g)
        h = to_nx(x.chordal_graph(g))
        assert {frozenset(c) for c in nx.find_cliques(h)} == set(x.cliques)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.floats(0.1, 0.8), st.integers(0, 10_000))
def test_completion_has_no_chordless_cycle(n, p, seed):
    g = WDG(random_graph(np.random.default_rng(seed), n, p))
    h = mcs_partition(g).chordal_graph(g)
    assert set(g.edges()) <= set(h.edges())
    assert induced_chordless_cycle(h.adj) is None
    assert nx.is_chordal(to_nx(h))


def check_tree(g: WDG, root) -> None:
    seen = [w for n in root.walk() for w in n.workers]
    assert sorted(seen) == g.nodes, "every worker in exactly one node"
    for node in root.walk():
        kids = node.children
        for i in range(len(kids)):
            for j in range(i + 1, len(kids)):
                a, b = kids[i].all_workers(), kids[j].all_workers()
                assert not any(g.has_edge(u, v) for u in a for v in b)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.floats(0.05, 0.6), st.integers(0, 10_000))
def test_tree_covers_workers_and_siblings_are_independent(n, p, seed):
    g = WDG(random_graph(np.random.default_rng(seed), n, p))
    for comp in g.components():
        sub = g.subgraph(comp)
        check_tree(sub, build_tree(sub))


def test_star_root_is_the_hub():
    g = WDG.from_edges(range(1, 6), [(1, 2), (1, 3), (1, 4), (1, 5)])
    root = build_tree(g)
    assert 1 in root.workers and len(root.children) == 3


def test_forest_numbering_and_serialisation():
    g = WDG.from_edges([1, 2, 3, 4, 5], [(1, 2), (2, 3), (4, 5)])
    f = build_forest(g)
    assert [n.node_id for n in f.nodes()] == list(range(len(f.nodes())))
    doc = json.loads(f.to_json())
    assert len(doc["trees"]) == 2
    assert f.to_text().startswith("[0]")
    with pytest.raises(ValueError):
        build_tree(WDG())
