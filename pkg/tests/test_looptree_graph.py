from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_tree
from looptree_lab.gw_trees import PlaneTree, make_offspring_law
from looptree_lab.looptree_graph import (
    build_loop,
    read_edge_list,
    root_vertex,
    vertex_measure,
    write_edge_list,
)


def _edge_multiset(edges):
    return Counter(tuple(sorted(map(int, e))) for e in edges)


def _reference_edges(tree: PlaneTree):
    # around each tree vertex, incident tree edges in planar order form one cycle;
    # a tree edge is named by its child endpoint
    parent = tree.parents()
    incident = {u: [] if u == 0 else [u] for u in range(tree.n)}
    for v in range(1, tree.n):
        incident[int(parent[v])].append(v)
    out = []
    for ring in incident.values():
        ring = [v - 1 for v in ring]
        if len(ring) == 1:
            out.append((ring[0], ring[0]))
        elif len(ring) > 1:
            out += [(ring[i], ring[(i + 1) % len(ring)]) for i in range(len(ring))]
    return out


def test_path_of_three(path3):
    lt = build_loop(path3)
    assert lt.vertex_count == 2
    assert _edge_multiset(lt.edges) == Counter({(0, 0): 1, (0, 1): 2, (1, 1): 1})
    assert root_vertex(lt) == 0


def test_star_of_three(star3):
    lt = build_loop(star3)
    assert lt.vertex_count == 3
    assert _edge_multiset(lt.edges) == Counter({(0, 1): 1, (1, 2): 1, (0, 2): 1, (0, 0): 1, (1, 1): 1, (2, 2): 1})
    assert root_vertex(lt) == 0
    assert lt.vertex_origin[0].tolist() == [0, 1]


def test_single_vertex_is_rejected():
    with pytest.raises(ValueError):
        build_loop(PlaneTree(np.array([0])))


@given(n=st.integers(2, 2000), seed=st.integers(0, 2**32))
def test_structural_invariants(n, seed):
    tree = random_tree(make_offspring_law(1.5), n, seed)
    lt = build_loop(tree)
    assert lt.vertex_count == n - 1
    assert np.all(lt.degrees() == 4)
    assert lt.degrees().sum() == 4 * (n - 1)
    assert len(lt.edges) == 2 * (n - 1)
    assert lt.cycle_count == n
    assert lt.is_connected()
    assert lt.vertex_origin[root_vertex(lt), 0] == 0


@given(n=st.integers(2, 200), seed=st.integers(0, 2**32))
def test_edges_match_reference_construction(n, seed):
    tree = random_tree(make_offspring_law(1.5), n, seed)
    assert _edge_multiset(build_loop(tree).edges) == _edge_multiset(_reference_edges(tree))


def test_deterministic(law15):
    tree = random_tree(law15, 300, 9)
    a, b = build_loop(tree), build_loop(PlaneTree(tree.child_counts.copy()))
    assert np.array_equal(a.edges, b.edges)
    assert np.array_equal(a.neighbors, b.neighbors)


def test_neighbors_consistent_with_edges(law15):
    lt = build_loop(random_tree(law15, 400, 5))
    from_nb = Counter()
    for v in range(lt.vertex_count):
        for w in lt.neighbors[v]:
            from_nb[tuple(sorted((v, int(w))))] += 1
    # each edge is seen from both ends (self-loops twice from the same end)
    assert from_nb == Counter({e: 2 * c for e, c in _edge_multiset(lt.edges).items()})


def test_measure_normalisation(law15):
    lt = build_loop(random_tree(law15, 100, 1))
    mu = vertex_measure(lt)
    assert mu.normalizer == pytest.approx(1 / 100)
    assert mu.mass(7) == pytest.approx(7 / 100)
    assert mu.total_mass() == pytest.approx(99 / 100)


def test_edge_list_round_trip(tmp_path, law15):
    lt = build_loop(random_tree(law15, 60, 2))
    path = tmp_path / "loop.edges"
    write_edge_list(lt, path)
    count, root, edges = read_edge_list(path)
    assert (count, root) == (lt.vertex_count, lt.root)
    assert np.array_equal(edges, lt.edges)
