"""Two-parameter Poisson-Dirichlet weights by residual allocation (GEM).

``M_k = Z_k * prod_{i<k} (1 - Z_i)`` with independent
``Z_k ~ Beta(1 - beta, k * beta + theta)``.  Beta variables are built from
two Gamma draws so that ``Z`` and ``1 - Z`` are both computed without
cancellation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "GEMWeights",
    "looptree_parameters",
    "sample_gem",
    "gem_mean",
    "gem_second_moment",
    "gem_moment_check",
    "paley_zygmund_bound_check",
    "write_gem_csv",
    "write_gem_summary",
]


def _check_params(beta: float, theta: float) -> None:
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    if not theta > -beta:
        raise ValueError(f"theta must exceed -beta, got theta={theta}, beta={beta}")


def _shapes(beta: float, theta: float, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.full(k.shape, 1.0 - beta), k * beta + theta


def looptree_parameters(alpha: float) -> tuple[float, float]:
    """``(1/alpha, 1 - 1/alpha)`` for the stable looptree."""
    if not 1.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (1, 2)")
    return 1.0 / alpha, 1.0 - 1.0 / alpha


@dataclass(frozen=True)
class GEMWeights:
    """Weights ``M[..., k-1] = M_k`` for ``k = 1..K`` and the leftover mass."""

    beta: float
    theta: float
    M: np.ndarray
    residual: np.ndarray
    Z: np.ndarray

    @property
    def K(self) -> int:
        return self.M.shape[-1]

    def total(self) -> np.ndarray:
        return self.M.sum(axis=-1) + self.residual


def sample_gem(beta: float, theta: float, K: int = 1000, rng: np.random.Generator | None = None, size: int | None = None) -> GEMWeights:
    """Draw one GEM sequence (``size=None``) or ``size`` independent ones stacked on axis 0."""
    _check_params(beta, theta)
    if K < 1:
        raise ValueError("K must be positive")
    rng = np.random.default_rng() if rng is None else rng
    shape = (K,) if size is None else (size, K)
    a, b = _shapes(beta, theta, np.arange(1, K + 1, dtype=float))
    Ga = rng.standard_gamma(np.broadcast_to(a, shape))
    Gb = rng.standard_gamma(np.broadcast_to(b, shape))
    tot = Ga + Gb
    Z = Ga / tot
    W = Gb / tot  # 1 - Z
    stick = np.cumprod(W, axis=-1)
    prev = np.concatenate([np.ones(shape[:-1] + (1,)), stick[..., :-1]], axis=-1)
    M = Z * prev
    return GEMWeights(beta=beta, theta=theta, M=M, residual=stick[..., -1], Z=Z)


def _beta_moments(beta: float, theta: float, k: np.ndarray):
    a, b = _shapes(beta, theta, k)
    s = a + b
    ez = a / s
    ez2 = a * (a + 1) / (s * (s + 1))
    ew = b / s
    ew2 = b * (b + 1) / (s * (s + 1))
    return ez, ez2, ew, ew2


def gem_mean(beta: float, theta: float, k) -> np.ndarray | float:
    """``E[M_k] = E[Z_k] prod_{i<k} E[1 - Z_i]``."""
    _check_params(beta, theta)
    kk = np.atleast_1d(np.asarray(k, dtype=np.int64))
    if kk.min() < 1:
        raise ValueError("k starts at 1")
    idx = np.arange(1, kk.max() + 1, dtype=float)
    ez, _, ew, _ = _beta_moments(beta, theta, idx)
    logprod = np.concatenate([[0.0], np.cumsum(np.log(ew))])
    out = ez[kk - 1] * np.exp(logprod[kk - 1])
    return float(out[0]) if np.ndim(k) == 0 else out


def gem_second_moment(beta: float, theta: float, k) -> np.ndarray | float:
    """``E[M_k^2] = E[Z_k^2] prod_{i<k} E[(1 - Z_i)^2]``."""
    _check_params(beta, theta)
    kk = np.atleast_1d(np.asarray(k, dtype=np.int64))
    if kk.min() < 1:
        raise ValueError("k starts at 1")
    idx = np.arange(1, kk.max() + 1, dtype=float)
    _, ez2, _, ew2 = _beta_moments(beta, theta, idx)
    logprod = np.concatenate([[0.0], np.cumsum(np.log(ew2))])
    out = ez2[kk - 1] * np.exp(logprod[kk - 1])
    return float(out[0]) if np.ndim(k) == 0 else out


def gem_moment_check(beta: float, theta: float, k_max: int, trials: int, rng: np.random.Generator, chunk: int = 20_000) -> dict:
    """Empirical first moments of ``M_1..M_kmax`` against the closed form."""
    s1 = np.zeros(k_max)
    s2 = np.zeros(k_max)
    worst_sum_err = 0.0
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        g = sample_gem(beta, theta, k_max, rng, size=size)
        s1 += g.M.sum(axis=0)
        s2 += (g.M**2).sum(axis=0)
        worst_sum_err = max(worst_sum_err, float(np.abs(g.total() - 1.0).max()))
        done += size
    mean = s1 / trials
    se = np.sqrt(np.maximum(s2 / trials - mean**2, 0.0) / trials)
    k = np.arange(1, k_max + 1)
    exact = gem_mean(beta, theta, k)
    z = np.abs(mean - exact) / np.where(se > 0, se, np.inf)
    return {
        "beta": beta,
        "theta": theta,
        "trials": trials,
        "k": k.tolist(),
        "exact_mean": exact.tolist(),
        "empirical_mean": mean.tolist(),
        "se": se.tolist(),
        "exact_second_moment": gem_second_moment(beta, theta, k).tolist(),
        "empirical_second_moment": (s2 / trials).tolist(),
        "max_z": float(z.max()),
        "max_sum_error": worst_sum_err,
        "passed": bool(z.max() <= 3.0),
    }


def paley_zygmund_bound_check(
    beta: float,
    theta: float,
    cprime: float,
    trials: int,
    rng: np.random.Generator | None = None,
    k_max: int = 100,
    alpha: float | None = None,
    chunk: int = 20_000,
) -> dict:
    """Empirical ``P(M_k >= c' k^-alpha)`` for ``k <= k_max`` with its Paley-Zygmund bound.

    The bound applied at level ``q_k = c' k^-alpha / E[M_k]`` reads
    ``P(M_k >= q_k E[M_k]) >= (1 - q_k)_+^2 E[M_k]^2 / E[M_k^2]``.  Also
    reported: ``c_hat = min_k P_k / (1 - c')^2``, the empirical constant.
    ``alpha`` defaults to ``1 / beta``.
    """
    _check_params(beta, theta)
    if not 0.0 < cprime < 1.0:
        raise ValueError("cprime must lie in (0, 1)")
    rng = np.random.default_rng() if rng is None else rng
    alpha = 1.0 / beta if alpha is None else alpha
    k = np.arange(1, k_max + 1)
    level = cprime * k.astype(float) ** (-alpha)
    hits = np.zeros(k_max)
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        g = sample_gem(beta, theta, k_max, rng, size=size)
        hits += (g.M >= level).sum(axis=0)
        done += size
    p = hits / trials
    se = np.sqrt(p * (1 - p) / trials)
    m1 = gem_mean(beta, theta, k)
    m2 = gem_second_moment(beta, theta, k)
    q = level / m1
    bound = np.clip(1.0 - q, 0.0, None) ** 2 * m1**2 / m2
    c_hat = float(p.min() / (1.0 - cprime) ** 2)
    return {
        "beta": beta,
        "theta": theta,
        "alpha": alpha,
        "cprime": cprime,
        "trials": trials,
        "k": k.tolist(),
        "probability": p.tolist(),
        "se": se.tolist(),
        "pz_bound": bound.tolist(),
        "pz_ratio": (m1**2 / m2).tolist(),
        "min_probability": float(p.min()),
        "c_hat": c_hat,
        "bound_respected": bool(np.all(p + 3 * se + 1e-12 >= bound)),
        "positive": bool(p.min() > 0),
        "passed": bool(p.min() > 0 and np.all(p + 3 * se + 1e-12 >= bound)),
    }


def write_gem_csv(weights: GEMWeights, path) -> None:
    """Rows ``k,M_k`` (one sample) or ``sample,k,M_k`` (stacked samples)."""
    M = np.atleast_2d(weights.M)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        if weights.M.ndim == 1:
            w.writerow(["k", "M_k"])
            for k, v in enumerate(M[0], start=1):
                w.writerow([k, repr(float(v))])
        else:
            w.writerow(["sample", "k", "M_k"])
            for i, row in enumerate(M):
                for k, v in enumerate(row, start=1):
                    w.writerow([i, k, repr(float(v))])


def write_gem_summary(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
