"""Graph distance and effective resistance on finite electrical networks.

Networks carry positive edge conductances with parallel edges merged and
self-loops dropped.  Resistances come from the grounded Laplacian: a sparse
LU factorization for small graphs, Jacobi-preconditioned conjugate gradients
for large ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, splu

from .looptree_graph import LooptreeGraph
from .stable_levy import StablePath, descent

__all__ = [
    "WeightedNetwork",
    "ResistanceResult",
    "DisconnectedError",
    "bfs_distances",
    "shortest_dist",
    "effective_resistance",
    "resistance_matrix",
    "reduce_network",
    "build_G_prime",
    "GPrimeNetwork",
    "write_resistance_csv",
]

DIRECT_SOLVER_LIMIT = 10_000
SOLVER_TOL = 1e-10


class DisconnectedError(ValueError):
    """Raised when a query needs a path between different components."""


@dataclass(frozen=True)
class ResistanceResult:
    u: int
    v: int
    value: float
    method: str = "lu"

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True, eq=False)
class WeightedNetwork:
    """Vertices ``0..size-1`` and merged edges ``(head[k], tail[k])`` with conductance ``cond[k]``.

    Build through :meth:`from_edges`, which sums parallel edges and drops
    self-loops.  The grounded factorization is cached on first use.
    """

    size: int
    head: np.ndarray
    tail: np.ndarray
    cond: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if np.any(self.cond <= 0):
            raise ValueError("conductances must be positive")
        if np.any(self.head >= self.tail):
            raise ValueError("edges must be stored with head < tail")

    @classmethod
    def from_edges(cls, size: int, edges, conductances=None) -> "WeightedNetwork":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        cond = np.ones(len(edges)) if conductances is None else np.asarray(conductances, dtype=float)
        if len(cond) != len(edges):
            raise ValueError("one conductance per edge")
        if len(edges) and (edges.min() < 0 or edges.max() >= size):
            raise ValueError("edge endpoint out of range")
        keep = edges[:, 0] != edges[:, 1]
        a = np.minimum(edges[keep, 0], edges[keep, 1])
        b = np.maximum(edges[keep, 0], edges[keep, 1])
        key = a * size + b
        uniq, inv = np.unique(key, return_inverse=True)
        merged = np.bincount(inv, weights=cond[keep], minlength=len(uniq))
        return cls(int(size), uniq // size, uniq % size, merged)

    @classmethod
    def from_looptree(cls, looptree: LooptreeGraph) -> "WeightedNetwork":
        return cls.from_edges(looptree.vertex_count, looptree.edges)

    @property
    def edge_count(self) -> int:
        return len(self.cond)

    def conductance(self, u: int, v: int) -> float:
        a, b = min(u, v), max(u, v)
        hit = np.flatnonzero((self.head == a) & (self.tail == b))
        return float(self.cond[hit[0]]) if len(hit) else 0.0

    def laplacian(self) -> sp.csr_matrix:
        if "L" not in self._cache:
            n = self.size
            rows = np.concatenate([self.head, self.tail, self.head, self.tail])
            cols = np.concatenate([self.tail, self.head, self.head, self.tail])
            vals = np.concatenate([-self.cond, -self.cond, self.cond, self.cond])
            self._cache["L"] = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return self._cache["L"]

    def is_connected(self) -> bool:
        if self.size <= 1:
            return True
        k, _ = connected_components(self.laplacian(), directed=False)
        return k == 1

    def without_edge(self, k: int) -> "WeightedNetwork":
        keep = np.arange(self.edge_count) != k
        return WeightedNetwork(self.size, self.head[keep], self.tail[keep], self.cond[keep])

    def _grounded(self):
        """Solver for the Laplacian with vertex 0 grounded."""
        if "solve" in self._cache:
            return self._cache["solve"]
        if not self.is_connected():
            raise DisconnectedError("network is disconnected; grounded Laplacian is singular")
        Lg = self.laplacian()[1:, 1:].tocsc()
        if self.size - 1 <= DIRECT_SOLVER_LIMIT:
            lu = splu(Lg)
            method = "lu"

            def solve(b):
                return lu.solve(b)

        else:
            diag = Lg.diagonal()
            M = sp.diags(1.0 / diag)
            method = "cg"

            def solve(b):
                x, info = cg(Lg, b, rtol=SOLVER_TOL, atol=0.0, M=M, maxiter=20 * Lg.shape[0])
                if info != 0:
                    raise RuntimeError(f"conjugate gradients did not converge (info={info})")
                return x

        self._cache["solve"] = (solve, method)
        return self._cache["solve"]

    def potentials(self, u: int, v: int) -> tuple[np.ndarray, str]:
        """Potential for unit current in at ``u`` and out at ``v`` (vertex 0 at zero)."""
        solve, method = self._grounded()
        b = np.zeros(self.size)
        b[u] += 1.0
        b[v] -= 1.0
        phi = np.zeros(self.size)
        if self.size > 1:
            phi[1:] = solve(b[1:])
        return phi, method


def _check_vertex(n: int, *vs: int) -> None:
    for v in vs:
        if not 0 <= v < n:
            raise IndexError(f"vertex {v} out of range [0, {n})")


def bfs_distances(looptree: LooptreeGraph, source: int) -> np.ndarray:
    """Graph distance from ``source`` to every looptree vertex (``-1`` if unreachable)."""
    _check_vertex(looptree.vertex_count, source)
    dist = np.full(looptree.vertex_count, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source])
    level = 0
    nb = looptree.neighbors
    while len(frontier):
        level += 1
        cand = np.unique(nb[frontier].ravel())
        cand = cand[dist[cand] < 0]
        dist[cand] = level
        frontier = cand
    return dist


def shortest_dist(looptree: LooptreeGraph, u: int, v: int) -> int:
    """Unit-edge graph distance; self-loops never shorten a path."""
    dist = bfs_distances(looptree, u)
    _check_vertex(looptree.vertex_count, v)
    if dist[v] < 0:
        raise DisconnectedError(f"vertices {u} and {v} are not connected; looptree is corrupt")
    return int(dist[v])


def effective_resistance(network: WeightedNetwork, u: int, v: int) -> ResistanceResult:
    _check_vertex(network.size, u, v)
    if u == v:
        return ResistanceResult(u, v, 0.0, "trivial")
    phi, method = network.potentials(u, v)
    return ResistanceResult(u, v, float(phi[u] - phi[v]), method)


def resistance_matrix(network: WeightedNetwork, nodes) -> np.ndarray:
    """Pairwise effective resistances between ``nodes`` using one solve per node.

    Uses ``R(a, b) = G_aa + G_bb - 2 G_ab`` with ``G`` the Green function
    grounded at vertex 0.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    _check_vertex(network.size, *nodes.tolist())
    solve, _ = network._grounded()
    G = np.zeros((len(nodes), len(nodes)))
    for i, a in enumerate(nodes.tolist()):
        if a == 0:
            continue
        b = np.zeros(network.size - 1)
        b[a - 1] = 1.0
        col = np.concatenate([[0.0], solve(b)])
        G[i] = col[nodes]
    G = 0.5 * (G + G.T)
    d = np.diag(G)
    R = d[:, None] + d[None, :] - 2 * G
    np.fill_diagonal(R, 0.0)
    return np.maximum(R, 0.0)


def reduce_network(network: WeightedNetwork, subset, rel_tol: float = 1e-13) -> WeightedNetwork:
    """Schur complement of the Laplacian onto ``subset``.

    Vertex ``i`` of the result is ``subset[i]``.  Off-diagonal entries of the
    reduced Laplacian below ``rel_tol`` times the largest one are treated as
    absent edges.
    """
    V = np.asarray(subset, dtype=np.int64)
    if len(V) == 0:
        raise ValueError("subset must be nonempty")
    if len(np.unique(V)) != len(V):
        raise ValueError("subset has repeated vertices")
    _check_vertex(network.size, *V.tolist())
    L = network.laplacian().tocsc()
    inner = np.setdiff1d(np.arange(network.size), V)
    L_VV = L[V][:, V].toarray()
    if len(inner):
        L_II = L[inner][:, inner].tocsc()
        L_IV = L[inner][:, V].toarray()
        try:
            lu = splu(L_II)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError("interior block is singular") from exc
        X = lu.solve(L_IV)
        if not np.all(np.isfinite(X)):
            raise np.linalg.LinAlgError("interior block is near-singular")
        S = L_VV - L_IV.T @ X
    else:
        S = L_VV
    S = 0.5 * (S + S.T)
    iu, ju = np.triu_indices(len(V), k=1)
    c = -S[iu, ju]
    scale = np.abs(c).max() if len(c) else 0.0
    keep = c > rel_tol * max(scale, 1e-300)
    return WeightedNetwork(len(V), iu[keep].astype(np.int64), ju[keep].astype(np.int64), c[keep])


@dataclass(frozen=True)
class GPrimeNetwork:
    """Loops joined along the tree, with ``sample_nodes[i]`` the node of ``points[i]``."""

    network: WeightedNetwork
    points: np.ndarray
    sample_nodes: np.ndarray

    def resistance(self, i: int, j: int) -> float:
        return effective_resistance(self.network, int(self.sample_nodes[i]), int(self.sample_nodes[j])).value


class _UnionFind:
    def __init__(self):
        self.parent: list[int] = []

    def add(self) -> int:
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def build_G_prime(excursion: StablePath, points, reduce: bool = False, tol: float = 1e-12) -> GPrimeNetwork:
    """Finite network whose resistance between sample points equals ``R`` of the looptree.

    ``points`` are grid indices into ``excursion``.  Every loop met by the
    descent of some point becomes a cycle with resistors between consecutive
    marked positions (its base, the sample points on it and the bases of the
    loops hanging off it).  A loop base is identified with its attachment
    point on the parent loop; loops with no parent hang off a common root.
    With ``reduce=True`` the network is reduced to the sample nodes.
    """
    pts = np.asarray(points, dtype=np.int64).ravel()
    if len(pts) == 0:
        raise ValueError("need at least one point")
    if pts.min() < 0 or pts.max() > excursion.m:
        raise IndexError("point outside the time grid")

    uf = _UnionFind()
    root = uf.add()
    loop_len: dict[int, float] = {}
    marks: dict[int, dict[float, int]] = {}  # loop -> position -> node
    base_node: dict[int, int] = {}

    def mark(loop: int, pos: float) -> int:
        L = loop_len[loop]
        if pos >= L - tol * max(1.0, L) or pos <= tol * max(1.0, L):
            return base_node[loop]
        table = marks[loop]
        for q, node in table.items():
            if abs(q - pos) <= tol * max(1.0, L):
                return node
        node = uf.add()
        table[pos] = node
        return node

    point_nodes = []
    for t in pts.tolist():
        D = descent(excursion, t)
        here = root
        for s, L, x in zip(D.s.tolist(), D.delta.tolist(), D.x.tolist()):
            if s not in loop_len:
                loop_len[s] = float(L)
                marks[s] = {}
                base_node[s] = uf.add()
                uf.union(base_node[s], here)
            here = mark(s, min(max(x, 0.0), L))
        point_nodes.append(here)

    edges, conds = [], []
    for s, table in marks.items():
        L = loop_len[s]
        if not table:
            continue
        ring = [(0.0, base_node[s])] + sorted(table.items())
        for (p, a), (q, b) in zip(ring, ring[1:] + [(L, base_node[s])]):
            gap = q - p
            if gap <= tol * max(1.0, L):
                uf.union(a, b)
            else:
                edges.append((a, b))
                conds.append(1.0 / gap)

    rep = np.array([uf.find(i) for i in range(len(uf.parent))], dtype=np.int64)
    labels, compact = np.unique(rep, return_inverse=True)
    sample_nodes = compact[np.asarray(point_nodes, dtype=np.int64)]
    if len(np.unique(sample_nodes)) != len(sample_nodes):
        raise ValueError("sample points have coincident projections")
    E = compact[np.asarray(edges, dtype=np.int64).reshape(-1, 2)] if edges else np.zeros((0, 2), np.int64)
    net = WeightedNetwork.from_edges(len(labels), E, np.asarray(conds))
    if reduce and len(pts) < net.size:
        net = reduce_network(net, sample_nodes)
        sample_nodes = np.arange(len(pts))
    return GPrimeNetwork(network=net, points=pts, sample_nodes=sample_nodes)


def write_resistance_csv(rows, path) -> None:
    """Rows of ``(u, v, d, R)``."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "d", "R"])
        for u, v, d, R in rows:
            w.writerow([int(u), int(v), int(d) if float(d).is_integer() else repr(float(d)), repr(float(R))])
