"""Critical Galton-Watson trees in the stable domain of attraction.

Offspring laws are truncated pure power laws, ``pmf(k) = A k^(-alpha-1)`` for
``1 <= k <= cutoff`` with ``pmf(0)`` fixed by criticality.  Trees are stored as
their child counts in lexicographic (depth-first) order, from which the
Lukasiewicz path, height function and contour function are derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gamma as gamma_fn

__all__ = [
    "OffspringLaw",
    "PlaneTree",
    "RejectionBudgetExceeded",
    "make_offspring_law",
    "sample_offspring",
    "sample_conditioned_gw",
    "cycle_lemma_rotation",
    "lukasiewicz",
    "height_from_lukasiewicz",
    "dfs_generations",
    "contour",
    "contour_dist",
    "progeny_pmf_exact",
    "sample_progeny",
    "dwass_check",
    "expected_max_degree",
    "write_tree",
    "read_tree",
]

# values below this are handled by the multinomial head in the conditioned sampler
_HEAD = 64


class RejectionBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class OffspringLaw:
    """Critical offspring law with a power-law tail.

    ``tail_constant`` is the ``c`` in ``P(xi >= k) ~ c k^(-alpha)``.
    """

    alpha: float
    tail_constant: float
    pmf: np.ndarray
    tail_mass: float = 0.0
    cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cdf = np.cumsum(self.pmf)
        cdf[-1] = 1.0
        object.__setattr__(self, "cdf", cdf)

    @property
    def cutoff(self) -> int:
        return len(self.pmf) - 1

    def mean(self) -> float:
        k = np.arange(len(self.pmf), dtype=float)
        return float(np.dot(k, self.pmf))

    @property
    def c_alpha(self) -> float:
        """Scaling constant ``(c |Gamma(-alpha)|)^(-1/alpha)`` used for ``C_n``."""
        return (self.tail_constant * abs(gamma_fn(-self.alpha))) ** (-1.0 / self.alpha)

    @property
    def laplace_scale(self) -> float:
        """Constant ``a`` such that ``S_n / (a n^(1/alpha))`` has Laplace exponent ``lambda^alpha``.

        Derived from the Levy measure ``alpha(alpha-1)/Gamma(2-alpha) x^(-alpha-1)``.
        """
        return (self.tail_constant * self.alpha * abs(gamma_fn(-self.alpha))) ** (1.0 / self.alpha)

    def scale(self, n: int) -> float:
        """``C_n = C_alpha n^(1/alpha)``."""
        return self.c_alpha * n ** (1.0 / self.alpha)


def make_offspring_law(alpha: float, c: float | None = None, cutoff: int = 10**6) -> OffspringLaw:
    """Build a critical offspring law with ``P(xi >= k) ~ c k^(-alpha)``.

    With ``c=None`` the pure power family is used: ``pmf(k) = A k^(-alpha-1)``
    for every ``1 <= k <= cutoff`` and ``A`` is forced by the mean-one
    constraint; the implied ``c = A / alpha`` is reported.  With an explicit
    ``c`` the weights ``alpha c k^(-alpha-1)`` are used for ``k >= 2`` and
    ``pmf(1)``, ``pmf(0)`` absorb criticality and normalisation.
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (1, 2), got {alpha}")
    if cutoff < 10**4:
        raise ValueError(f"cutoff must be at least 10^4, got {cutoff}")
    if c is not None and c <= 0:
        raise ValueError(f"tail constant must be positive, got {c}")

    k = np.arange(1, cutoff + 1, dtype=float)
    power = k ** (-alpha - 1.0)
    pmf = np.zeros(cutoff + 1)
    if c is None:
        amp = 1.0 / float(np.sum(k * power))
        pmf[1:] = amp * power
        c_eff = amp / alpha
    else:
        amp = alpha * c
        tail = amp * power[1:]
        p1 = 1.0 - float(np.sum(k[1:] * tail))
        p0 = 1.0 - p1 - float(np.sum(tail))
        if p1 < 0 or p0 < 0:
            raise ValueError(
                f"no critical law with tail constant c={c} at alpha={alpha}, cutoff={cutoff}"
            )
        pmf[1] = p1
        pmf[2:] = tail
        c_eff = c
    pmf[0] = 1.0 - float(np.sum(pmf[1:]))
    if pmf[0] < 0:
        raise ValueError("criticality forces a negative mass at 0; increase the cutoff")
    pmf /= pmf.sum()
    # mass of the untruncated power law beyond the cutoff, for reporting only
    tail_mass = amp * cutoff ** (-alpha) / alpha
    return OffspringLaw(alpha=alpha, tail_constant=c_eff, pmf=pmf, tail_mass=tail_mass)


def sample_offspring(law: OffspringLaw, size, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(size)
    return np.searchsorted(law.cdf, u, side="right").astype(np.int64)


@dataclass(frozen=True)
class PlaneTree:
    """Rooted plane tree given by child counts in lexicographic order."""

    child_counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.child_counts, dtype=np.int64)
        object.__setattr__(self, "child_counts", counts)
        if counts.ndim != 1 or len(counts) == 0:
            raise ValueError("child_counts must be a non-empty 1-d sequence")
        if np.any(counts < 0):
            raise ValueError("child counts must be nonnegative")
        walk = np.cumsum(counts - 1)
        if walk[-1] != -1 or np.any(walk[:-1] < 0):
            raise ValueError("child counts do not describe a plane tree")

    @property
    def n(self) -> int:
        return len(self.child_counts)

    def parents(self) -> np.ndarray:
        """Parent index of every vertex (``-1`` for the root)."""
        parent = np.full(self.n, -1, dtype=np.int64)
        stack: list[list[int]] = []  # [vertex, children still to attach]
        for i, k in enumerate(self.child_counts.tolist()):
            if stack:
                top = stack[-1]
                parent[i] = top[0]
                top[1] -= 1
                if top[1] == 0:
                    stack.pop()
            if k > 0:
                stack.append([i, k])
        return parent

    def __str__(self) -> str:
        return " ".join(map(str, self.child_counts.tolist()))


def cycle_lemma_rotation(increments: np.ndarray) -> np.ndarray:
    """Rotate a sequence with sum -1 so that all proper prefix sums are >= 0."""
    increments = np.asarray(increments)
    partial = np.cumsum(increments)
    if partial[-1] != -1:
        raise ValueError("increments must sum to -1")
    start = int(np.argmin(partial)) + 1  # first time the minimum is attained
    return np.concatenate([increments[start:], increments[:start]])


def sample_conditioned_gw(
    law: OffspringLaw,
    n: int,
    rng: np.random.Generator,
    max_tries: int = 10**7,
    batch: int = 512,
) -> PlaneTree:
    """Sample GW(law) conditioned to have exactly ``n`` vertices.

    Draws ``n`` i.i.d. offspring counts conditioned on summing to ``n - 1`` by
    rejection, then applies the cycle lemma.  Each proposal is drawn through
    its multiset of values: a multinomial over the values ``< 64`` plus
    inverse-CDF draws for the few larger ones, so a rejected proposal costs
    O(1) instead of O(n).  Given the accepted multiset the order is a uniform
    shuffle, which is exactly the i.i.d. conditional law.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return PlaneTree(np.zeros(1, dtype=np.int64))

    head = min(_HEAD, law.cutoff + 1)
    pvals = np.append(law.pmf[:head], max(0.0, 1.0 - law.cdf[head - 1]))
    pvals /= pvals.sum()
    head_values = np.arange(head, dtype=np.int64)
    cdf_head = law.cdf[head - 1]
    tries = 0
    while tries < max_tries:
        counts = rng.multinomial(n, pvals, size=batch)
        n_big = counts[:, -1]
        total_big = int(n_big.sum())
        u = cdf_head + rng.random(total_big) * (1.0 - cdf_head)
        big = np.minimum(np.searchsorted(law.cdf, u, side="right"), law.cutoff)
        big = np.maximum(big, head).astype(np.int64)
        offsets = np.concatenate([[0], np.cumsum(n_big)])
        owner = np.repeat(np.arange(batch), n_big)
        big_sums = np.bincount(owner, weights=big, minlength=batch).astype(np.int64)
        sums = counts[:, :-1] @ head_values + big_sums
        hits = np.flatnonzero(sums == n - 1)
        if len(hits):
            j = int(hits[0])
            tries += j + 1
            values = np.concatenate(
                [np.repeat(head_values, counts[j, :-1]), big[offsets[j] : offsets[j + 1]]]
            )
            rng.shuffle(values)
            return PlaneTree(cycle_lemma_rotation(values - 1) + 1)
        tries += batch
    raise RejectionBudgetExceeded(
        f"no proposal with total progeny {n} after {tries} tries; n may be incompatible with the law"
    )


def lukasiewicz(tree: PlaneTree) -> np.ndarray:
    """Lukasiewicz path ``W`` of length ``n + 1``."""
    return np.concatenate([[0], np.cumsum(tree.child_counts - 1)])


def height_from_lukasiewicz(W) -> np.ndarray:
    """Height function from the Lukasiewicz path with a monotone stack.

    ``H(m) = #{k < m : W_k = min W[k..m]}``; the stack holds exactly those
    ``k`` for the current ``m``.
    """
    W = np.asarray(W).tolist()
    n = len(W) - 1
    H = np.zeros(n, dtype=np.int64)
    stack: list[int] = []
    for m in range(1, n):
        stack.append(m - 1)
        wm = W[m]
        while stack and W[stack[-1]] > wm:
            stack.pop()
        H[m] = len(stack)
    return H


def dfs_generations(tree: PlaneTree) -> np.ndarray:
    """Generation of each vertex computed from parent pointers."""
    parent = tree.parents()
    gen = np.zeros(tree.n, dtype=np.int64)
    for i in range(1, tree.n):
        gen[i] = gen[parent[i]] + 1
    return gen


def contour(tree: PlaneTree) -> np.ndarray:
    """Contour function, sampled at integer times ``0..2(n-1)``."""
    H = dfs_generations(tree)
    out = [0]
    for i in range(1, tree.n):
        # climb from the previous vertex to the parent of vertex i, then step down
        target = H[i] - 1
        level = out[-1]
        out.extend(range(level - 1, target - 1, -1))
        out.append(int(H[i]))
    out.extend(range(out[-1] - 1, -1, -1))
    return np.asarray(out, dtype=np.int64)


def contour_dist(C, s: int, t: int) -> int:
    """Tree distance between the vertices visited by the contour at times ``s`` and ``t``."""
    C = np.asarray(C)
    if s > t:
        s, t = t, s
    if s < 0 or t >= len(C):
        raise IndexError(f"contour times ({s}, {t}) outside [0, {len(C) - 1}]")
    return int(C[s] + C[t] - 2 * C[s : t + 1].min())


def progeny_pmf_exact(law: OffspringLaw, k_max: int) -> np.ndarray:
    """``P(|T| = k) = P(xi_1 + ... + xi_k = k - 1) / k`` for ``k = 1..k_max``.

    Only ``pmf[0:k_max]`` can contribute, so the convolution powers stay small.
    """
    base = law.pmf[:k_max]
    out = np.zeros(k_max + 1)
    conv = np.array([1.0])
    for k in range(1, k_max + 1):
        conv = np.convolve(conv, base)[:k_max]
        out[k] = conv[k - 1] / k if k - 1 < len(conv) else 0.0
    return out[1:]


def sample_progeny(law: OffspringLaw, trials: int, k_max: int, rng, chunk: int = 200_000):
    """Total progeny of unconditioned GW trees, explored vertex by vertex.

    Trees still alive after ``k_max`` explored vertices are reported as ``k_max + 1``.
    """
    out = np.empty(trials, dtype=np.int64)
    for lo in range(0, trials, chunk):
        m = min(chunk, trials - lo)
        pending = np.ones(m, dtype=np.int64)
        size = np.zeros(m, dtype=np.int64)
        alive = np.ones(m, dtype=bool)
        for _ in range(k_max):
            idx = np.flatnonzero(alive)
            if len(idx) == 0:
                break
            kids = sample_offspring(law, len(idx), rng)
            pending[idx] += kids - 1
            size[idx] += 1
            alive[idx] = pending[idx] > 0
        size[alive] = k_max + 1
        out[lo : lo + m] = size
    return out


def dwass_check(law: OffspringLaw, k_max: int, trials: int, rng) -> dict:
    """Compare empirical progeny frequencies with the hitting-time identity."""
    if k_max > 12:
        raise ValueError("k_max must be <= 12")
    exact = progeny_pmf_exact(law, k_max)
    sizes = sample_progeny(law, trials, k_max, rng)
    freq = np.bincount(sizes, minlength=k_max + 2)[1 : k_max + 1] / trials
    se = np.sqrt(np.maximum(exact * (1 - exact), 1e-300) / trials)
    dev = np.abs(freq - exact)
    z = np.where(se > 0, dev / se, 0.0)
    return {
        "k": list(range(1, k_max + 1)),
        "exact": exact.tolist(),
        "empirical": freq.tolist(),
        "se": se.tolist(),
        "max_abs_deviation": float(dev.max()),
        "max_z": float(z.max()),
        "passed": bool(np.all(dev <= 3 * se + 1e-15)),
    }


def write_tree(tree: PlaneTree, path, seed: int | None = None, alpha: float | None = None) -> None:
    header = []
    if seed is not None:
        header.append(f"seed={int(seed)}")
    if alpha is not None:
        header.append(f"alpha={alpha!r}")
    text = (f"# {' '.join(header)}\n" if header else "") + str(tree) + "\n"
    Path(path).write_text(text)


def read_tree(path) -> PlaneTree:
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            return PlaneTree(np.array(line.split(), dtype=np.int64))
    raise ValueError(f"{path}: no tree line found")


def expected_max_degree(law: OffspringLaw, n: int) -> float:
    """Median of the maximum of ``n`` i.i.d. offspring: solves ``n P(xi >= k) = log 2``."""
    return (law.tail_constant * n / math.log(2)) ** (1.0 / law.alpha)
