"""Spectrally positive alpha-stable paths, bridges and excursions on a grid.

The process is normalised so that ``E[exp(-lam X_t)] = exp(t lam^alpha)``.
Paths are stored as their values at times ``i/m`` together with a jump ledger
``(index, size)``: the jump at ledger index ``s`` is ``X[s] - X[s-1]``, so the
left limit ``X_{s-}`` is ``X[s-1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gw_trees import PlaneTree, lukasiewicz

__all__ = [
    "StablePath",
    "BridgePath",
    "ExcursionPath",
    "DescentSet",
    "cms_standard",
    "sample_stable_path",
    "sample_stable_bridge",
    "excursion_from_bridge",
    "bridge_from_excursion",
    "excursion_from_cgw",
    "oscillation",
    "descent",
    "levy_tail",
    "write_path_csv",
    "read_path_csv",
]

JUMP_THRESHOLD_FACTOR = 5.0


@dataclass(frozen=True)
class StablePath:
    alpha: float
    values: np.ndarray
    jump_index: np.ndarray
    jump_size: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "jump_index", np.asarray(self.jump_index, dtype=np.int64))
        object.__setattr__(self, "jump_size", np.asarray(self.jump_size, dtype=float))
        if len(values) < 2:
            raise ValueError("a path needs at least two grid points")
        if not np.all(np.isfinite(values)):
            raise ValueError("path values must be finite")
        if np.any(self.jump_size < 0):
            raise ValueError("jump sizes must be nonnegative")
        if len(self.jump_index) and (self.jump_index.min() < 1 or self.jump_index.max() > self.m):
            raise ValueError("jump ledger index outside 1..m")

    @property
    def m(self) -> int:
        return len(self.values) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.m + 1) / self.m


@dataclass(frozen=True)
class BridgePath(StablePath):
    tol: float = 1e-12

    def __post_init__(self):
        super().__post_init__()
        if abs(self.values[0]) > self.tol or abs(self.values[-1]) > self.tol:
            raise ValueError("bridge endpoints must be pinned at 0")


@dataclass(frozen=True)
class ExcursionPath(StablePath):
    """Nonnegative path from 0 back to 0.

    ``lattice_step`` is set when the path is a rescaled Lukasiewicz path: it is
    the size of one lattice unit, and jumps of size 0 in the ledger are
    vertices with a single child.  ``tie_broken`` records that the Vervaat
    argmin was not unique.
    """

    tol: float = 1e-12
    lattice_step: float | None = None
    tie_broken: bool = False

    def __post_init__(self):
        super().__post_init__()
        v = self.values
        if abs(v[0]) > self.tol or abs(v[-1]) > self.tol:
            raise ValueError("excursion must start and end at 0")
        if np.any(v[1:-1] < -self.tol):
            raise ValueError("excursion must stay nonnegative")


@dataclass(frozen=True)
class DescentSet:
    """Ancestor jump times ``s <= t`` of a grid time ``t`` in increasing order."""

    t: int
    s: np.ndarray
    x: np.ndarray
    delta: np.ndarray

    @property
    def u(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.delta > 0, self.x / np.where(self.delta > 0, self.delta, 1), 0.0)

    def __len__(self) -> int:
        return len(self.s)


def cms_standard(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draws of ``X_1`` with ``E[exp(-lam X_1)] = exp(lam^alpha)``.

    Totally skewed to the right (beta = 1) with scale ``|cos(pi alpha / 2)|^(1/alpha)``.
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (1, 2), got {alpha}")
    V = rng.uniform(-math.pi / 2, math.pi / 2, size)
    W = rng.exponential(1.0, size)
    tan_term = math.tan(math.pi * alpha / 2)
    B = math.atan(tan_term) / alpha
    S = (1.0 + tan_term**2) ** (1.0 / (2.0 * alpha))
    X = (
        S
        * np.sin(alpha * (V + B))
        / np.cos(V) ** (1.0 / alpha)
        * (np.cos(V - alpha * (V + B)) / W) ** ((1.0 - alpha) / alpha)
    )
    sigma = abs(math.cos(math.pi * alpha / 2)) ** (1.0 / alpha)
    return sigma * X


def _ledger(increments: np.ndarray, m: int, alpha: float):
    threshold = JUMP_THRESHOLD_FACTOR * m ** (-1.0 / alpha)
    idx = np.flatnonzero(increments > threshold)
    return idx + 1, increments[idx]


def sample_stable_path(alpha: float, m: int, rng: np.random.Generator, seed: int | None = None):
    """Path on ``[0, 1]`` with ``m`` i.i.d. increments distributed as ``X_{1/m}``."""
    if m < 2:
        raise ValueError("m must be >= 2")
    incr = cms_standard(alpha, m, rng) * m ** (-1.0 / alpha)
    values = np.concatenate([[0.0], np.cumsum(incr)])
    idx, size = _ledger(incr, m, alpha)
    return StablePath(alpha=alpha, values=values, jump_index=idx, jump_size=size, seed=seed)


def sample_stable_bridge(
    alpha: float,
    m: int,
    rng: np.random.Generator,
    tol: float | None = None,
    max_tries: int = 100_000,
    seed: int | None = None,
) -> BridgePath:
    """Approximate bridge: reject until ``|X_1| <= tol``, then remove the residual drift.

    This is a cross-check generator; the lattice route through
    :func:`excursion_from_cgw` is the canonical one.
    """
    tol = m ** (-1.0 / alpha) if tol is None else tol
    scale = m ** (-1.0 / alpha)
    for _ in range(max_tries):
        incr = cms_standard(alpha, m, rng) * scale
        total = incr.sum()
        if abs(total) <= tol:
            incr = incr - total / m
            values = np.concatenate([[0.0], np.cumsum(incr)])
            values[-1] = 0.0
            idx, size = _ledger(incr, m, alpha)
            return BridgePath(alpha=alpha, values=values, jump_index=idx, jump_size=size, seed=seed, tol=1e-9)
    raise RuntimeError(f"no bridge within tolerance {tol} after {max_tries} tries")


def _rotate(path: StablePath, k: int):
    """Cyclic shift of the increments so that the new path starts at old index ``k``."""
    m = path.m
    base = path.values[:-1]
    values = np.append(np.roll(base, -k) - base[k], 0.0)
    idx = (path.jump_index - 1 - k) % m + 1
    order = np.argsort(idx, kind="stable")
    return values, idx[order], path.jump_size[order]


def excursion_from_bridge(bridge: StablePath) -> ExcursionPath:
    """Vervaat transform: rotate the bridge at its (earliest) grid argmin."""
    v = bridge.values[:-1]
    k = int(np.argmin(v))
    ties = int(np.sum(v == v[k])) > 1
    values, idx, size = _rotate(bridge, k)
    lattice = getattr(bridge, "lattice_step", None)
    return ExcursionPath(
        alpha=bridge.alpha,
        values=values,
        jump_index=idx,
        jump_size=size,
        seed=bridge.seed,
        tol=1e-9,
        lattice_step=lattice,
        tie_broken=ties,
    )


def bridge_from_excursion(excursion: ExcursionPath, U: float) -> BridgePath:
    """Inverse Vervaat transform: cyclic shift by ``floor(U m)`` grid steps."""
    if not 0.0 <= U < 1.0:
        raise ValueError("U must lie in [0, 1)")
    k = int(math.floor(U * excursion.m))
    values, idx, size = _rotate(excursion, k)
    return BridgePath(
        alpha=excursion.alpha, values=values, jump_index=idx, jump_size=size, seed=excursion.seed, tol=1e-9
    )


def excursion_from_cgw(tree: PlaneTree, scale: float, alpha: float, seed: int | None = None) -> ExcursionPath:
    """Rescaled Lukasiewicz path ``W / C_n`` with the final value -1 clipped to 0.

    Every vertex with at least one child contributes a ledger entry of size
    ``(k - 1) / C_n`` at index ``i + 1``.
    """
    W = lukasiewicz(tree).astype(float)
    values = W / scale
    values[-1] = 0.0
    k = tree.child_counts
    vertices = np.flatnonzero(k >= 1)
    return ExcursionPath(
        alpha=alpha,
        values=values,
        jump_index=vertices + 1,
        jump_size=(k[vertices] - 1) / scale,
        seed=seed,
        tol=1e-12,
        lattice_step=1.0 / scale,
    )


def _grid_range(m: int, a: float, b: float) -> tuple[int, int]:
    lo = int(math.ceil(a * m - 1e-9))
    hi = int(math.floor(b * m + 1e-9))
    return lo, hi


def oscillation(path: StablePath, a: float, b: float) -> float:
    """``sup - inf`` of the grid values over ``[a, b]``."""
    if not 0.0 <= a <= b <= 1.0:
        raise ValueError("need 0 <= a <= b <= 1")
    lo, hi = _grid_range(path.m, a, b)
    if hi < lo:
        return 0.0
    seg = path.values[lo : hi + 1]
    return float(seg.max() - seg.min())


def descent(path: StablePath, t: int) -> DescentSet:
    """Ledger jumps ``s <= t`` with ``X[s-1] <= min X[s..t]``.

    ``x = min X[s..t] - X[s-1]``.  A jump at ``s = t`` belongs to the descent
    of ``t`` with ``x = Delta``.
    """
    if not 0 <= t <= path.m:
        raise IndexError(f"grid index {t} outside 0..{path.m}")
    X = path.values
    sel = path.jump_index <= t
    s = path.jump_index[sel]
    if len(s) == 0:
        return DescentSet(t, s, np.zeros(0), np.zeros(0))
    seg = X[: t + 1]
    suffix_min = np.minimum.accumulate(seg[::-1])[::-1]
    inf_st = suffix_min[s]
    keep = X[s - 1] <= inf_st
    s = s[keep]
    x = inf_st[keep] - X[s - 1]
    delta = path.jump_size[sel][keep]
    return DescentSet(t, s, np.minimum(x, delta), delta)


def levy_tail(alpha: float, x) -> np.ndarray:
    """``Pi((x, inf))`` for the Levy measure ``alpha(alpha-1)/Gamma(2-alpha) y^(-alpha-1) dy``."""
    return (alpha - 1.0) / math.gamma(2.0 - alpha) * np.asarray(x, dtype=float) ** (-alpha)


def write_path_csv(path: StablePath, dest) -> None:
    lines = [
        f"# alpha={path.alpha!r},m={path.m},seed={'' if path.seed is None else int(path.seed)}",
        "i,t,value",
    ]
    m = path.m
    lines += [f"{i},{i / m!r},{v!r}" for i, v in enumerate(path.values.tolist())]
    lines.append("index,delta")
    lines += [f"{i},{d!r}" for i, d in zip(path.jump_index.tolist(), path.jump_size.tolist())]
    Path(dest).write_text("\n".join(lines) + "\n")


def read_path_csv(src) -> StablePath:
    header = None
    values, ledger = [], []
    section = None
    for line in Path(src).read_text().splitlines():
        if line.startswith("#"):
            header = dict(kv.split("=", 1) for kv in line[1:].strip().split(","))
            continue
        if line == "i,t,value":
            section = "values"
            continue
        if line == "index,delta":
            section = "ledger"
            continue
        parts = line.split(",")
        if section == "values":
            values.append(float(parts[2]))
        elif section == "ledger":
            ledger.append((int(parts[0]), float(parts[1])))
    seed = int(header["seed"]) if header and header.get("seed") else None
    alpha = float(header["alpha"]) if header else float("nan")
    idx = np.array([a for a, _ in ledger], dtype=np.int64)
    size = np.array([b for _, b in ledger], dtype=float)
    return StablePath(alpha=alpha, values=np.array(values), jump_index=idx, jump_size=size, seed=seed)
