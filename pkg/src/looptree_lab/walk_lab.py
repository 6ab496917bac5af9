"""Random walks on discrete looptrees.

Every looptree vertex has four edge-ends, so one simple-random-walk step is
``neighbors[v, k]`` with ``k`` uniform in ``0..3``.  Long walks run in numba
kernels that take two bits per step from ``uint64`` words drawn by a numpy
``Generator``; results therefore depend only on the generator state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
import scipy.sparse as sp

from .continuum_looptree import LooptreeMetricOracle
from .graph_metrics import bfs_distances
from .gw_trees import PlaneTree
from .looptree_graph import LooptreeGraph
from .stable_levy import excursion_from_cgw

__all__ = [
    "WalkConfig",
    "HeatKernelEstimate",
    "SpectralFit",
    "ExitTimeStat",
    "Trajectory",
    "FlatRegimeError",
    "srw_step",
    "ctrw_step",
    "run_walk",
    "transition_matrix",
    "distribution_after",
    "return_probability",
    "average_estimates",
    "spectral_dimension_fit",
    "exit_time",
    "root_distances",
    "rescaled_trajectory",
    "write_kernel_csv",
    "write_exit_csv",
    "write_trajectory_csv",
]

EXACT_LIMIT = 5000
WORDS = 1 << 16
STEPS_PER_WORD = 32


class FlatRegimeError(ValueError):
    """The fit window reaches the equilibrium plateau of the kernel."""


@dataclass(frozen=True)
class WalkConfig:
    mode: str = "discrete"
    horizon: float = 100
    start: int = 0
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("discrete", "continuous"):
            raise ValueError("mode must be 'discrete' or 'continuous'")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


def srw_step(looptree: LooptreeGraph, v: int, rng: np.random.Generator) -> int:
    """One step: uniform over the four edge-ends at ``v``."""
    return int(looptree.neighbors[v, rng.integers(4)])


def ctrw_step(looptree: LooptreeGraph, v: int, rng: np.random.Generator) -> tuple[int, float]:
    """Exp(4) holding time at ``v`` followed by a simple-random-walk jump."""
    hold = float(rng.exponential(0.25))
    return srw_step(looptree, v, rng), hold


def run_walk(looptree: LooptreeGraph, config: WalkConfig, rng: np.random.Generator | None = None):
    """Return visited vertices (and jump times in continuous mode) up to the horizon."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    v = config.start
    path = [v]
    if config.mode == "discrete":
        for _ in range(int(config.horizon)):
            v = srw_step(looptree, v, rng)
            path.append(v)
        return np.asarray(path)
    clock, times = 0.0, [0.0]
    while True:
        w, hold = ctrw_step(looptree, v, rng)
        clock += hold
        if clock > config.horizon:
            break
        v = w
        path.append(v)
        times.append(clock)
    return np.asarray(path), np.asarray(times)


def transition_matrix(looptree: LooptreeGraph) -> sp.csr_matrix:
    """``P[v, w]`` = number of edge-ends at ``v`` leading to ``w``, divided by 4."""
    k = looptree.vertex_count
    rows = np.repeat(np.arange(k), 4)
    P = sp.csr_matrix((np.full(4 * k, 0.25), (rows, looptree.neighbors.ravel())), shape=(k, k))
    P.sum_duplicates()
    return P


# numba kernels ------------------------------------------------------------


@numba.njit(cache=True)
def _propagate(nb, start, t_max, watch):
    """Exact law after each step; returns ``P_start(Z_t = watch)`` for ``t = 0..t_max``."""
    k = nb.shape[0]
    p = np.zeros(k)
    q = np.zeros(k)
    p[start] = 1.0
    out = np.empty(t_max + 1)
    out[0] = p[watch]
    for t in range(1, t_max + 1):
        for v in range(k):
            q[v] = 0.25 * (p[nb[v, 0]] + p[nb[v, 1]] + p[nb[v, 2]] + p[nb[v, 3]])
        p, q = q, p
        out[t] = p[watch]
    return out


@numba.njit(cache=True)
def _distribution(nb, start, t):
    k = nb.shape[0]
    p = np.zeros(k)
    q = np.zeros(k)
    p[start] = 1.0
    for _ in range(t):
        for v in range(k):
            q[v] = 0.25 * (p[nb[v, 0]] + p[nb[v, 1]] + p[nb[v, 2]] + p[nb[v, 3]])
        p, q = q, p
    return p


@numba.njit(cache=True)
def _advance(nb, v, steps, words):
    """Walk ``steps`` steps from ``v`` using two bits of ``words`` per step."""
    i = 0
    w = np.uint64(0)
    left = 0
    for _ in range(steps):
        if left == 0:
            w = words[i]
            i += 1
            left = 32
        v = nb[v, np.int64(w & np.uint64(3))]
        w >>= np.uint64(2)
        left -= 1
    return v


@numba.njit(cache=True)
def _returns(nb, start, t_max, walkers_left, state, words, counts):
    """Monte-Carlo returns; ``state = [pos, t]`` persists across word blocks.

    Returns the number of walkers still to run.
    """
    pos = state[0]
    t = state[1]
    for i in range(words.shape[0]):
        w = words[i]
        for _ in range(32):
            if walkers_left == 0:
                state[0] = pos
                state[1] = t
                return walkers_left
            pos = nb[pos, np.int64(w & np.uint64(3))]
            w >>= np.uint64(2)
            t += 1
            if pos == start:
                counts[t] += 1
            if t == t_max:
                walkers_left -= 1
                pos = start
                t = 0
    state[0] = pos
    state[1] = t
    return walkers_left


@numba.njit(cache=True)
def _exits(nb, inside, start, trials_left, state, words, acc):
    """Exit times from ``inside``; ``acc = [sum, sum of squares]``.

    ``state = [pos, steps]`` persists across word blocks.
    """
    pos = state[0]
    steps = state[1]
    for i in range(words.shape[0]):
        w = words[i]
        for _ in range(32):
            if trials_left == 0:
                state[0] = pos
                state[1] = steps
                return trials_left
            pos = nb[pos, np.int64(w & np.uint64(3))]
            w >>= np.uint64(2)
            steps += 1
            if not inside[pos]:
                acc[0] += steps
                acc[1] += float(steps) * float(steps)
                trials_left -= 1
                pos = start
                steps = 0
    state[0] = pos
    state[1] = steps
    return trials_left


def _words(rng: np.random.Generator, size: int = WORDS) -> np.ndarray:
    return rng.bit_generator.random_raw(size)


# heat kernel ---------------------------------------------------------------


@dataclass(frozen=True)
class HeatKernelEstimate:
    """Return probabilities ``p_hat[i] = P_v(Z_{times[i]} = v)``.

    ``density`` divides by the uniform stationary mass of ``v``.
    ``replicates`` optionally holds one row per independent graph.
    """

    times: np.ndarray
    p_hat: np.ndarray
    se: np.ndarray
    method: str
    vertex_count: int
    vertex: int = 0
    replicates: np.ndarray | None = field(default=None, repr=False)

    @property
    def p_smooth(self) -> np.ndarray:
        """Two-step average ``(p_t + p_{t+1}) / 2`` (last entry kept raw)."""
        out = self.p_hat.astype(float).copy()
        out[:-1] = 0.5 * (self.p_hat[:-1] + self.p_hat[1:])
        return out

    @property
    def density(self) -> np.ndarray:
        return self.p_hat * self.vertex_count


def return_probability(
    looptree: LooptreeGraph,
    v: int,
    t_max: int,
    method: str = "auto",
    walkers: int = 10_000,
    rng: np.random.Generator | None = None,
) -> HeatKernelEstimate:
    """``P_v(Z_t = v)`` for ``t = 0..t_max``.

    ``method='auto'`` propagates the exact law for graphs up to
    ``EXACT_LIMIT`` vertices and runs ``walkers`` independent walks otherwise.
    """
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    k = looptree.vertex_count
    if not 0 <= v < k:
        raise IndexError(f"vertex {v} out of range")
    if method == "auto":
        method = "exact-matrix" if k <= EXACT_LIMIT else "monte-carlo"
    times = np.arange(t_max + 1)
    if method == "exact-matrix":
        if k > 4 * EXACT_LIMIT:
            raise MemoryError(f"exact propagation limited to {4 * EXACT_LIMIT} vertices, got {k}")
        p = _propagate(looptree.neighbors, v, t_max, v)
        return HeatKernelEstimate(times, np.clip(p, 0.0, 1.0), np.zeros(t_max + 1), method, k, v)
    if method != "monte-carlo":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng() if rng is None else rng
    counts = np.zeros(t_max + 1, dtype=np.int64)
    state = np.array([v, 0], dtype=np.int64)
    left = walkers
    while left:
        left = _returns(looptree.neighbors, v, t_max, left, state, _words(rng), counts)
    counts[0] = walkers
    p = counts / walkers
    se = np.sqrt(p * (1 - p) / walkers)
    return HeatKernelEstimate(times, p, se, method, k, v)


def distribution_after(looptree: LooptreeGraph, v: int, t: int) -> np.ndarray:
    """Exact law of ``Z_t`` started from ``v``."""
    return _distribution(looptree.neighbors, v, t)


def average_estimates(estimates: list[HeatKernelEstimate]) -> HeatKernelEstimate:
    """Ensemble mean over graphs of equal size, keeping per-graph rows for the bootstrap."""
    times = estimates[0].times
    k = estimates[0].vertex_count
    if any(not np.array_equal(e.times, times) for e in estimates):
        raise ValueError("estimates must share a time grid")
    if any(e.vertex_count != k for e in estimates):
        raise ValueError("estimates must come from graphs of equal size")
    rows = np.stack([e.p_hat for e in estimates])
    mean = rows.mean(axis=0)
    se = rows.std(axis=0, ddof=1) / np.sqrt(len(rows)) if len(rows) > 1 else np.zeros_like(mean)
    return HeatKernelEstimate(times, mean, se, estimates[0].method, k, -1, rows)


@dataclass(frozen=True)
class SpectralFit:
    dimension: float
    slope: float
    intercept: float
    ci: tuple[float, float]
    r2: float
    window: tuple[int, int]
    n_points: int


def _loglog_fit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef[0], coef[1]


def spectral_dimension_fit(
    estimate: HeatKernelEstimate,
    window: tuple[int, int],
    smoothed: bool = True,
    n_boot: int = 1000,
    rng: np.random.Generator | None = None,
    points: int = 40,
    plateau: float = 2.0,
) -> SpectralFit:
    """Least-squares slope of log density against log t on a geometric grid in ``window``.

    The dimension estimate is ``-2 * slope``.  The bootstrap resamples
    replicate rows when present, otherwise fit residuals.  Windows that
    touch the plateau (density below ``plateau`` times equilibrium) or give
    no decay are refused with :class:`FlatRegimeError`.
    """
    lo, hi = int(window[0]), int(window[1])
    lo = max(lo, 1)
    if hi > estimate.times[-1] or lo >= hi:
        raise ValueError(f"window {window} outside the time grid")
    grid = np.unique(np.geomspace(lo, hi, points).round().astype(np.int64))
    if len(grid) < 8:
        raise ValueError("need at least 8 time points in the window")

    def curve(rows):
        if smoothed:
            rows = rows.astype(float).copy()
            rows[..., :-1] = 0.5 * (rows[..., :-1] + rows[..., 1:])
        return rows

    base = curve(estimate.density)[grid]
    if np.any(base <= 0):
        raise FlatRegimeError("nonpositive kernel values in window")
    if base.min() <= plateau:
        raise FlatRegimeError("window reaches the equilibrium plateau")
    x = np.log(grid.astype(float))
    y = np.log(base)
    slope, intercept = _loglog_fit(x, y)
    if slope > -0.02:
        raise FlatRegimeError(f"no decay in window (slope {slope:.4f})")
    resid = y - (slope * x + intercept)
    r2 = 1.0 - resid.var() / y.var() if y.var() > 0 else 1.0

    rng = np.random.default_rng(0) if rng is None else rng
    boots = np.empty(n_boot)
    if estimate.replicates is not None and len(estimate.replicates) > 1:
        rows = curve(estimate.replicates * estimate.vertex_count)[:, grid]
        for b in range(n_boot):
            pick = rng.integers(0, len(rows), len(rows))
            m = rows[pick].mean(axis=0)
            boots[b] = _loglog_fit(x, np.log(np.maximum(m, 1e-300)))[0]
    else:
        fitted = slope * x + intercept
        for b in range(n_boot):
            boots[b] = _loglog_fit(x, fitted + rng.choice(resid, len(resid)))[0]
    lo_s, hi_s = np.quantile(boots, [0.025, 0.975])
    return SpectralFit(
        dimension=float(-2 * slope),
        slope=float(slope),
        intercept=float(intercept),
        ci=(float(-2 * hi_s), float(-2 * lo_s)),
        r2=float(r2),
        window=(int(grid[0]), int(grid[-1])),
        n_points=len(grid),
    )


# exit times ----------------------------------------------------------------


@dataclass(frozen=True)
class ExitTimeStat:
    r: int
    mean: float
    se: float
    trials: int


def exit_time(
    looptree: LooptreeGraph,
    v: int,
    r: int,
    trials: int,
    rng: np.random.Generator,
    dist: np.ndarray | None = None,
) -> ExitTimeStat:
    """Mean number of steps until the walk from ``v`` reaches graph distance ``r``.

    The ball is open, ``{w : d(v, w) < r}``.  ``dist`` may pass precomputed
    BFS distances from ``v``.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    dist = bfs_distances(looptree, v) if dist is None else dist
    inside = dist < r
    if inside.all():
        raise ValueError(f"ball of radius {r} covers the whole graph")
    acc = np.zeros(2)
    state = np.array([v, 0], dtype=np.int64)
    left = trials
    while left:
        left = _exits(looptree.neighbors, inside, v, left, state, _words(rng), acc)
    mean = acc[0] / trials
    var = max(acc[1] / trials - mean**2, 0.0)
    se = np.sqrt(var / (trials - 1)) if trials > 1 else 0.0
    return ExitTimeStat(int(r), float(mean), float(se), int(trials))


# rescaled trajectories -----------------------------------------------------


def root_distances(tree: PlaneTree, alpha: float = 1.5) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(R, d)`` from the looptree root to every vertex of ``Loop(tree)``.

    Uses the lattice coding of the tree; looptree vertex ``v`` is grid time
    ``v + 1``.
    """
    n = tree.n
    ex = excursion_from_cgw(tree, 1.0, alpha)
    oracle = LooptreeMetricOracle(ex, lattice=True)
    R = oracle.single_source(1, "R")[1:n]
    d = np.rint(oracle.single_source(1, "d")[1:n])
    return R, d


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    steps: np.ndarray
    vertices: np.ndarray
    displacement_R: np.ndarray
    displacement_d: np.ndarray
    seed: int | None = None


def rescaled_trajectory(
    looptree: LooptreeGraph,
    alpha: float,
    C_alpha: float,
    horizon: float,
    rng: np.random.Generator,
    root_R: np.ndarray,
    root_d: np.ndarray | None = None,
    dt: float | None = None,
    times=None,
    seed: int | None = None,
) -> Trajectory:
    """Walk from the root, sampled at macroscopic times under ``floor(4 C n^(1+1/alpha) t)``.

    Distances are scaled by ``n^(-1/alpha)`` with ``n`` the tree size.
    Sampling times are ``times`` if given, else ``0, dt, ..., horizon``.
    """
    n = looptree.n_tree
    if times is None:
        dt = horizon / 10 if dt is None else dt
        times = np.arange(0.0, horizon + 0.5 * dt, dt)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times.min() < 0:
        raise ValueError("times must be nonnegative and sorted")
    root_d = bfs_distances(looptree, looptree.root) if root_d is None else root_d
    rate = 4.0 * C_alpha * n ** (1.0 + 1.0 / alpha)
    steps = np.floor(rate * times + 1e-9).astype(np.int64)
    v = looptree.root
    done = 0
    verts = np.empty(len(times), dtype=np.int64)
    for i, s in enumerate(steps.tolist()):
        todo = s - done
        while todo > 0:
            chunk = min(todo, STEPS_PER_WORD * WORDS)
            v = _advance(looptree.neighbors, v, chunk, _words(rng, -(-chunk // STEPS_PER_WORD)))
            todo -= chunk
        done = s
        verts[i] = v
    scale = n ** (-1.0 / alpha)
    return Trajectory(times, steps, verts, root_R[verts] * scale, root_d[verts] * scale, seed)


# output ------------------------------------------------------------------


def _write(path, header, rows, comments=()):
    with Path(path).open("w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_kernel_csv(estimate: HeatKernelEstimate, path, comments=()) -> None:
    rows = [[int(t), repr(float(p)), repr(float(s)), estimate.method] for t, p, s in zip(estimate.times, estimate.p_hat, estimate.se)]
    _write(path, ["t", "p_hat", "se", "method"], rows, comments)


def write_exit_csv(stats: list[ExitTimeStat], path, comments=()) -> None:
    rows = [[s.r, repr(s.mean), repr(s.se), s.trials] for s in stats]
    _write(path, ["r", "mean_tau", "se", "trials"], rows, comments)


def write_trajectory_csv(trajectories: list[Trajectory], path, comments=()) -> None:
    rows = []
    for tr in trajectories:
        for t, a, b in zip(tr.times, tr.displacement_R, tr.displacement_d):
            rows.append([repr(float(t)), repr(float(a)), repr(float(b)), tr.seed])
    _write(path, ["t", "displacement_R", "displacement_d", "seed"], rows, comments)
