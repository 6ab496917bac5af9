"""Looptree pseudodistances ``d`` and ``R`` evaluated from an excursion.

Each ledger jump of size ``Delta`` is a loop.  A grid time ``t`` sits on the
loop of its latest ancestor jump at position ``x`` (see
:func:`looptree_lab.stable_levy.descent`), and loop bases hang off their
parent loop at the position of the loop's own jump time.  Across a loop,
``d`` uses the cyclic distance and ``R`` the parallel-law resistance.

With ``lattice=True`` on a rescaled Lukasiewicz path the loops are given the
exact circumferences of ``Loop(T)`` (``k + 1`` lattice units, ``k`` for the
root loop), which makes both metrics agree exactly with graph distance and
effective resistance on the discrete looptree.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .stable_levy import StablePath, descent

__all__ = [
    "delta_loop",
    "r_loop",
    "LooptreeMetricOracle",
    "BallVolumeCurve",
    "d_dist",
    "R_dist",
    "single_source_d",
    "single_source_R",
    "ball_volume",
    "ball_volume_curve",
    "osc_volume_inclusion_check",
    "write_volume_csv",
    "write_distance_csv",
]


def _check_args(Delta, a, b):
    if Delta < 0 or not (-1e-12 <= a <= Delta + 1e-12) or not (-1e-12 <= b <= Delta + 1e-12):
        raise ValueError(f"positions ({a}, {b}) outside [0, {Delta}]")


def delta_loop(Delta: float, a: float, b: float) -> float:
    _check_args(Delta, a, b)
    gap = abs(a - b)
    return min(gap, Delta - gap)


def r_loop(Delta: float, a: float, b: float) -> float:
    _check_args(Delta, a, b)
    if Delta == 0:
        return 0.0
    gap = abs(a - b)
    return gap * (Delta - gap) / Delta


def _delta_vec(L, a, b):
    gap = np.abs(a - b)
    return np.maximum(np.minimum(gap, L - gap), 0.0)


def _r_vec(L, a, b):
    gap = np.abs(a - b)
    safe = np.where(L > 0, L, 1.0)
    return np.where(L > 0, np.maximum(gap * (L - gap), 0.0) / safe, 0.0)


_LOOP_METRICS = {"d": _delta_vec, "R": _r_vec}


@dataclass(frozen=True)
class BallVolumeCurve:
    center: int
    radii: np.ndarray
    volumes: np.ndarray
    metric: str = "d"


class LooptreeMetricOracle:
    """Distances ``d`` and ``R`` between grid times of an excursion.

    Loop 0 is a virtual root loop of circumference 0; ledger jump ``j`` is
    loop ``j + 1``.  Precomputation is a single left-to-right pass with a
    stack that holds the current descent.
    """

    def __init__(self, excursion: StablePath, lattice: bool = False):
        if lattice and getattr(excursion, "lattice_step", None) is None:
            raise ValueError("lattice mode needs a path built by excursion_from_cgw")
        self.excursion = excursion
        self.lattice = lattice
        self.step = float(excursion.lattice_step) if lattice else 0.0
        self._build()

    def _build(self):
        ex = self.excursion
        X = ex.values.tolist()
        m = ex.m
        n_loops = len(ex.jump_index) + 1
        jump_at = np.zeros(m + 1, dtype=np.int64)
        jump_at[ex.jump_index] = np.arange(1, n_loops)
        jump_at_l = jump_at.tolist()

        delta = np.concatenate([[0.0], ex.jump_size])
        parent = np.zeros(n_loops, dtype=np.int64)
        attach_x = np.zeros(n_loops)  # raw x on the parent loop
        time_loop = np.zeros(m + 1, dtype=np.int64)
        time_x = np.zeros(m + 1)

        # stack entries: [loop id, base value X[s-1], running min over [s, t]]
        stack: list[list] = []
        for t in range(m + 1):
            val = X[t]
            while stack:
                top = stack[-1]
                if val < top[2]:
                    top[2] = val
                if top[1] > top[2]:
                    stack.pop()
                    if stack and top[2] < stack[-1][2]:
                        stack[-1][2] = top[2]
                else:
                    break
            j = jump_at_l[t]
            if j:
                if stack:
                    parent[j] = stack[-1][0]
                    attach_x[j] = stack[-1][2] - stack[-1][1]
                stack.append([j, X[t - 1], val])
            if stack:
                top = stack[-1]
                time_loop[t] = top[0]
                time_x[t] = top[2] - top[1]

        # clip x into [0, Delta] against rounding
        attach_x = np.minimum(np.maximum(attach_x, 0.0), delta[parent])
        time_x = np.minimum(np.maximum(time_x, 0.0), delta[time_loop])

        rootless = parent == 0
        rootless[0] = False
        if self.lattice:
            circ = np.where(rootless, delta + self.step, delta + 2 * self.step)
            circ[0] = 0.0
            shift = np.where(rootless, 0.0, self.step)
            shift[0] = 0.0
        else:
            circ = delta.copy()
            shift = np.zeros(n_loops)

        self.n_loops = n_loops
        self.loop_time = np.concatenate([[0], ex.jump_index])
        self.delta = delta
        self.circ = circ
        self.shift = shift
        self.parent = parent
        self.attach = attach_x + shift[parent]
        self.time_loop = time_loop
        self.time_pos = time_x + shift[time_loop]
        # depth of loop bases, loops are stored in time order so parents come first
        self.base_depth = {}
        for metric, fn in _LOOP_METRICS.items():
            depth = np.zeros(n_loops)
            hop = fn(circ[parent], 0.0, self.attach)
            parent_l = parent.tolist()
            hop_l = hop.tolist()
            depth_l = depth.tolist()
            for j in range(1, n_loops):
                depth_l[j] = depth_l[parent_l[j]] + hop_l[j]
            self.base_depth[metric] = np.asarray(depth_l)
        self.depth = {
            metric: self.base_depth[metric][time_loop] + fn(circ[time_loop], 0.0, self.time_pos)
            for metric, fn in _LOOP_METRICS.items()
        }

    @property
    def m(self) -> int:
        return self.excursion.m

    def _geometry(self, D):
        """Circumferences and positions along one descent (earliest loop has no parent)."""
        if not self.lattice:
            return D.delta, D.x
        L = D.delta + 2 * self.step
        pos = D.x + self.step
        if len(L):
            L[0] -= self.step
            pos[0] -= self.step
        return L, pos

    def pair(self, s: int, t: int, metric: str = "d") -> float:
        """Pairwise distance computed directly from the two descents."""
        fn = _LOOP_METRICS[metric]
        if s == t:
            return 0.0
        Ds = descent(self.excursion, s)
        Dt = descent(self.excursion, t)
        common, i_s, i_t = np.intersect1d(Ds.s, Dt.s, assume_unique=True, return_indices=True)
        Ls, ps = self._geometry(Ds)
        Lt, pt = self._geometry(Dt)
        if len(common):
            ws, wt = int(i_s.max()), int(i_t.max())
            total = float(fn(Ls[ws], ps[ws], pt[wt]))
            total += float(fn(Ls[ws + 1 :], 0.0, ps[ws + 1 :]).sum())
            total += float(fn(Lt[wt + 1 :], 0.0, pt[wt + 1 :]).sum())
        else:
            total = float(fn(Ls, 0.0, ps).sum() + fn(Lt, 0.0, pt).sum())
        return total

    def single_source(self, u: int, metric: str = "d") -> np.ndarray:
        """``metric(u, t)`` for every grid time ``t = 0..m``."""
        fn = _LOOP_METRICS[metric]
        parent, circ = self.parent, self.circ
        # chain of loops above u with u's branch position on each
        chain_pos = np.full(self.n_loops, np.nan)
        j, pos = int(self.time_loop[u]), float(self.time_pos[u])
        while True:
            chain_pos[j] = pos
            if j == 0:
                break
            pos = float(self.attach[j])
            j = int(parent[j])
        on_chain = ~np.isnan(chain_pos)

        # for every loop: the first chain loop at or above it and the entry position there
        hit = np.arange(self.n_loops)
        entry = np.full(self.n_loops, np.nan)
        active = np.flatnonzero(~on_chain)
        cur = active.copy()
        while len(active):
            entry[active] = self.attach[cur]
            cur = parent[cur]
            done = on_chain[cur]
            hit[active[done]] = cur[done]
            active, cur = active[~done], cur[~done]

        loops = self.time_loop
        direct = on_chain[loops]
        w = np.where(direct, loops, hit[loops])
        p_t = np.where(direct, self.time_pos, entry[loops])
        p_u = chain_pos[w]
        Lw = circ[w]
        base = self.base_depth[metric][w]
        depth = self.depth[metric]
        out = (
            depth[u]
            + depth
            - 2 * base
            - fn(Lw, 0.0, p_u)
            - fn(Lw, 0.0, p_t)
            + fn(Lw, p_u, p_t)
        )
        out = np.maximum(out, 0.0)
        out[u] = 0.0
        return out


def d_dist(oracle: LooptreeMetricOracle, s: int, t: int) -> float:
    return oracle.pair(s, t, "d")


def R_dist(oracle: LooptreeMetricOracle, s: int, t: int) -> float:
    return oracle.pair(s, t, "R")


def single_source_d(oracle: LooptreeMetricOracle, u: int) -> np.ndarray:
    return oracle.single_source(u, "d")


def single_source_R(oracle: LooptreeMetricOracle, u: int) -> np.ndarray:
    return oracle.single_source(u, "R")


def _mass_points(oracle: LooptreeMetricOracle, dist: np.ndarray) -> np.ndarray:
    # grid time m is the same point as time 0; nu charges times 0..m-1
    return dist[: oracle.m]


def ball_volume(oracle: LooptreeMetricOracle, u: int, r: float, metric: str = "d") -> float:
    """Closed-ball mass: fraction of grid times within distance ``r`` of ``u``."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    dist = _mass_points(oracle, oracle.single_source(u, metric))
    return float(np.count_nonzero(dist <= r) / len(dist))


def ball_volume_curve(oracle: LooptreeMetricOracle, u: int, radii, metric: str = "d") -> BallVolumeCurve:
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0) or np.any(radii <= 0):
        raise ValueError("radii must be positive and strictly increasing")
    dist = np.sort(_mass_points(oracle, oracle.single_source(u, metric)))
    vol = np.searchsorted(dist, radii, side="right") / len(dist)
    return BallVolumeCurve(center=u, radii=radii, volumes=vol, metric=metric)


def osc_volume_inclusion_check(
    oracle: LooptreeMetricOracle,
    U,
    r: float,
    lam: float,
    trials: int = 0,
    rng: np.random.Generator | None = None,
) -> dict:
    """Check ``d(p(s), p(t)) <= X_s + X_t - 2 min X[s..t]`` and the oscillation/volume inclusion.

    The inequality is checked on every pair from the grid times ``U``.  For
    the inclusion, a window of length ``h = r^alpha / lam`` starting at a
    uniform grid time is drawn ``trials`` times; whenever the oscillation on
    the window is at most ``r / 2`` the closed ball of radius ``r`` must hold
    at least the window's grid points.  The count for the threshold ``r``
    (without the factor 1/2) is reported as well.
    """
    X = oracle.excursion.values
    m = oracle.m
    U = np.asarray(sorted(set(int(u) for u in U)))
    violations = 0
    worst = 0.0
    for a_i, s in enumerate(U):
        ds = oracle.single_source(int(s), "d")
        later = U[a_i + 1 :]
        if len(later) == 0:
            continue
        suffix = np.minimum.accumulate(X[s:])
        bound = X[s] + X[later] - 2 * suffix[later - s]
        gap = ds[later] - bound
        violations += int(np.count_nonzero(gap > 1e-9))
        worst = max(worst, float(gap.max()))

    report = {
        "pairs": int(len(U) * (len(U) - 1) // 2),
        "inequality_violations": violations,
        "max_excess": worst,
        "r": r,
        "lambda": lam,
    }
    if trials:
        rng = np.random.default_rng() if rng is None else rng
        alpha = oracle.excursion.alpha
        width = int(np.floor(r**alpha / lam * m))
        if width < 1 or width >= m:
            raise ValueError("window r^alpha / lambda must cover between 1 and m - 1 grid steps")
        starts = rng.integers(0, m - width, size=trials)
        strict_events = strict_viol = loose_events = loose_viol = 0
        for s in starts.tolist():
            seg = X[s : s + width + 1]
            osc = float(seg.max() - seg.min())
            if osc > r:
                continue
            ds = oracle.single_source(s, "d")[:m]
            covered = int(np.count_nonzero(ds <= r)) >= width + 1
            loose_events += 1
            loose_viol += not covered
            if osc <= r / 2:
                strict_events += 1
                strict_viol += not covered
        report.update(
            trials=trials,
            window_steps=width,
            events=strict_events,
            inclusion_violations=strict_viol,
            events_osc_le_r=loose_events,
            violations_osc_le_r=loose_viol,
        )
    return report


def write_volume_csv(curves, path, seed: int | None, alpha: float, n: int) -> None:
    """Rows ``seed,alpha,n,center,r,volume`` for each curve and radius."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "alpha", "n", "center", "r", "volume"])
        for c in curves:
            for r, v in zip(c.radii.tolist(), c.volumes.tolist()):
                w.writerow(["" if seed is None else int(seed), repr(float(alpha)), int(n), int(c.center), repr(r), repr(v)])


def write_distance_csv(oracle: LooptreeMetricOracle, pairs, path) -> None:
    """Rows ``s,t,d,R`` for grid-time pairs."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "t", "d", "R"])
        for s, t in pairs:
            w.writerow([int(s), int(t), repr(oracle.pair(int(s), int(t), "d")), repr(oracle.pair(int(s), int(t), "R"))])
