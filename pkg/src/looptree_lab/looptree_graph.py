"""Discrete looptrees ``Loop(T)``.

Every tree vertex ``u`` of degree ``d`` becomes a cycle of length ``d`` whose
vertices are the tree edges at ``u``; cycles are glued along shared edges.
Looptree vertex ``i - 1`` stands for the edge between tree vertex ``u_i`` and
its parent, so the looptree root (edge from the root to its first child) is
vertex 0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gw_trees import PlaneTree

__all__ = [
    "LooptreeGraph",
    "UniformMeasure",
    "build_loop",
    "root_vertex",
    "vertex_measure",
    "write_edge_list",
    "read_edge_list",
]


@dataclass(frozen=True)
class LooptreeGraph:
    """Unit-conductance multigraph; self-loops allowed, every degree is 4.

    ``neighbors[v]`` lists the far endpoints of the four edge-ends at ``v``
    (a self-loop contributes ``v`` twice).  ``vertex_origin[v]`` is
    ``(parent tree vertex, child index)`` of the tree edge it represents.
    """

    vertex_count: int
    edges: np.ndarray  # (2(n-1), 2)
    root: int
    vertex_origin: np.ndarray  # (n-1, 2)
    neighbors: np.ndarray  # (n-1, 4)
    cycle_count: int

    @property
    def n_tree(self) -> int:
        return self.vertex_count + 1

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.vertex_count, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def is_connected(self) -> bool:
        seen = np.zeros(self.vertex_count, dtype=bool)
        seen[self.root] = True
        queue = deque([self.root])
        while queue:
            v = queue.popleft()
            for w in self.neighbors[v]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
        return bool(seen.all())


@dataclass(frozen=True)
class UniformMeasure:
    """Mass one per vertex, normalised by ``1 / n`` with ``n`` the tree size."""

    total: int
    vertex_count: int

    @property
    def normalizer(self) -> float:
        return 1.0 / self.total

    def mass(self, k: int) -> float:
        """Normalised mass of a set of ``k`` vertices."""
        return k * self.normalizer

    def total_mass(self) -> float:
        return self.vertex_count * self.normalizer


def build_loop(tree: PlaneTree) -> LooptreeGraph:
    n = tree.n
    if n < 2:
        raise ValueError("a tree with a single vertex has an empty looptree")
    counts = tree.child_counts
    parent = tree.parents()
    # looptree vertex of tree vertex i (i >= 1) is i - 1
    origin = np.zeros((n - 1, 2), dtype=np.int64)
    children: list[list[int]] = [[] for _ in range(n)]
    for i in range(1, n):
        p = int(parent[i])
        children[p].append(i - 1)
        origin[i - 1] = (p, len(children[p]))

    edges: list[tuple[int, int]] = []
    cycles = 0
    for u in range(n):
        ring = children[u] if u == 0 else [u - 1] + children[u]
        if not ring:
            continue
        cycles += 1
        if len(ring) == 1:
            edges.append((ring[0], ring[0]))
        else:
            edges.extend(zip(ring, ring[1:] + ring[:1]))
    assert cycles == n and len(counts) == n

    edges_arr = np.asarray(edges, dtype=np.int64)
    neighbors = np.empty((n - 1, 4), dtype=np.int64)
    fill = np.zeros(n - 1, dtype=np.int64)
    for a, b in edges:
        neighbors[a, fill[a]] = b
        fill[a] += 1
        neighbors[b, fill[b]] = a
        fill[b] += 1
    if not np.all(fill == 4):
        raise AssertionError("looptree vertex with degree != 4")
    return LooptreeGraph(
        vertex_count=n - 1,
        edges=edges_arr,
        root=0,
        vertex_origin=origin,
        neighbors=neighbors,
        cycle_count=cycles,
    )


def root_vertex(looptree: LooptreeGraph) -> int:
    return looptree.root


def vertex_measure(looptree: LooptreeGraph) -> UniformMeasure:
    return UniformMeasure(total=looptree.n_tree, vertex_count=looptree.vertex_count)


def write_edge_list(looptree: LooptreeGraph, path) -> None:
    lines = [f"# vertices={looptree.vertex_count} root={looptree.root}"]
    lines += [f"{a} {b}" for a, b in looptree.edges.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> tuple[int, int, np.ndarray]:
    """Return ``(vertex_count, root, edges)`` from an edge-list file."""
    vertex_count = root = None
    edges = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                key, _, value = token.partition("=")
                if key == "vertices":
                    vertex_count = int(value)
                elif key == "root":
                    root = int(value)
            continue
        a, b = line.split()
        edges.append((int(a), int(b)))
    edges_arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if vertex_count is None:
        vertex_count = int(edges_arr.max()) + 1 if len(edges_arr) else 0
    return vertex_count, (0 if root is None else root), edges_arr
