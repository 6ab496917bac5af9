from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from conftest import random_tree
from looptree_lab.gw_trees import PlaneTree, make_offspring_law
from looptree_lab.stable_levy import (
    JUMP_THRESHOLD_FACTOR,
    BridgePath,
    ExcursionPath,
    StablePath,
    bridge_from_excursion,
    cms_standard,
    descent,
    excursion_from_bridge,
    excursion_from_cgw,
    levy_tail,
    oscillation,
    read_path_csv,
    sample_stable_bridge,
    sample_stable_path,
    write_path_csv,
)


def _path(values, idx=(), size=()):
    return StablePath(alpha=1.5, values=np.asarray(values, float), jump_index=np.asarray(idx), jump_size=np.asarray(size))


# marginals ----------------------------------------------------------------------


@pytest.mark.parametrize("alpha", [1.3, 1.5, 1.7])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_laplace_normalisation(alpha, lam):
    x = cms_standard(alpha, 400_000, np.random.default_rng(int(alpha * 10 + lam * 100)))
    e = np.exp(-lam * x)
    est, se = e.mean(), e.std(ddof=1) / math.sqrt(len(e))
    # delta method: SE of log mean is se / mean
    assert abs(math.log(est) - lam**alpha) <= 4 * se / est


def test_mean_of_exp_minus_x_is_e():
    e = np.exp(-cms_standard(1.5, 1_000_000, np.random.default_rng(0)))
    assert abs(e.mean() - math.e) <= 3 * e.std(ddof=1) / 1000


def test_scaling_property():
    rng = np.random.default_rng(1)
    alpha, c, N = 1.5, 4, 20_000
    x1 = cms_standard(alpha, N, rng)
    x4 = cms_standard(alpha, (N, c), rng).sum(axis=1)  # X_4 as four unit increments
    assert ks_2samp(x1, c ** (-1 / alpha) * x4).statistic <= 1.95 * math.sqrt(2 / N)


def test_right_tail_exponent():
    x = cms_standard(1.5, 2_000_000, np.random.default_rng(2))
    grid = np.geomspace(10, 100, 8)
    surv = np.array([(x > g).mean() for g in grid])
    slope = np.polyfit(np.log(grid), np.log(surv), 1)[0]
    assert abs(slope + 1.5) <= 0.1
    # level matches the Levy measure tail for large x
    assert surv[3] / levy_tail(1.5, grid[3]) == pytest.approx(1.0, abs=0.1)


def test_levy_tail_by_quadrature():
    from scipy.integrate import quad

    a = 1.5
    dens = lambda y: a * (a - 1) / math.gamma(2 - a) * y ** (-a - 1)
    assert levy_tail(a, 3.0) == pytest.approx(quad(dens, 3.0, np.inf)[0], rel=1e-8)


def test_bad_alpha():
    with pytest.raises(ValueError):
        cms_standard(2.0, 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_stable_path(1.5, 1, np.random.default_rng(0))


def test_path_ledger_threshold():
    p = sample_stable_path(1.5, 1000, np.random.default_rng(3))
    incr = np.diff(p.values)
    thr = JUMP_THRESHOLD_FACTOR * 1000 ** (-1 / 1.5)
    assert np.array_equal(p.jump_index, np.flatnonzero(incr > thr) + 1)
    assert np.allclose(p.jump_size, incr[incr > thr])
    assert p.values[0] == 0.0


# Vervaat --------------------------------------------------------------------------


def test_toy_bridge_rotation():
    ex = excursion_from_bridge(_path([0, -1, 1, 0], [2], [2.0]))
    assert ex.values.tolist() == [0, 2, 1, 0]
    assert ex.jump_index.tolist() == [1]
    assert not ex.tie_broken


def test_tie_is_flagged():
    ex = excursion_from_bridge(_path([0, -1, 1, -1, 0.5, 0]))
    assert ex.tie_broken
    assert ex.values[1] == 2.0  # earliest argmin at index 1


@pytest.mark.parametrize("seed", range(5))
def test_vervaat_round_trip(seed):
    rng = np.random.default_rng(seed)
    ex = excursion_from_bridge(sample_stable_bridge(1.5, 400, rng))
    assert np.all(ex.values[1:-1] > -1e-9)
    for U in (0.0, rng.uniform(), 0.999):
        back = excursion_from_bridge(bridge_from_excursion(ex, U))
        assert np.allclose(back.values, ex.values, atol=1e-12)
        assert np.array_equal(back.jump_index, ex.jump_index)
        assert np.array_equal(back.jump_size, ex.jump_size)


def test_u_zero_is_identity():
    ex = excursion_from_bridge(sample_stable_bridge(1.5, 200, np.random.default_rng(9)))
    br = bridge_from_excursion(ex, 0.0)
    assert np.array_equal(br.values, ex.values)
    with pytest.raises(ValueError):
        bridge_from_excursion(ex, 1.0)


def test_bridge_endpoints():
    br = sample_stable_bridge(1.5, 300, np.random.default_rng(4))
    assert isinstance(br, BridgePath)
    assert br.values[0] == 0.0 and br.values[-1] == 0.0


# CGW excursion --------------------------------------------------------------------


def test_cgw_binary_three(binary_law):
    C = 2.5
    ex = excursion_from_cgw(PlaneTree(np.array([2, 0, 0])), C, 1.5)
    assert ex.values.tolist() == [0, 1 / C, 0, 0]
    assert ex.jump_index.tolist() == [1]
    assert ex.jump_size.tolist() == [1 / C]


def test_cgw_endpoint_and_ledger(law15):
    tree = random_tree(law15, 500, 0)
    C = law15.scale(500)
    ex = excursion_from_cgw(tree, C, 1.5)
    assert ex.values[-1] == 0.0
    assert abs(ex.values[-2]) <= 1 / C + 1e-12
    jumps = np.diff(ex.values[:-1])
    idx = ex.jump_index[ex.jump_index < ex.m]
    assert np.allclose(jumps[idx - 1], ex.jump_size[: len(idx)])


def test_cgw_max_is_order_one(law15):
    meds = []
    for n in (1000, 10_000, 100_000):
        rng = np.random.default_rng(n)
        maxima = [excursion_from_cgw(random_tree(law15, n, int(rng.integers(2**32))), law15.scale(n), 1.5).values.max() for _ in range(10)]
        meds.append(float(np.median(maxima)))
    assert max(meds) / min(meds) <= 2.0


# oscillation and descent ------------------------------------------------------------


def test_oscillation_examples():
    p = _path([0, 2, 1, 3])
    assert oscillation(p, 0.0, 1.0) == 3.0
    assert oscillation(_path([1, 1, 1]), 0.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        oscillation(p, 0.6, 0.4)


def test_descent_single_jump():
    values = np.concatenate([[0.0], np.linspace(1.0, 0.0, 11)])
    ex = ExcursionPath(alpha=1.5, values=values, jump_index=[1], jump_size=[1.0])
    for t in range(2, 12):
        D = descent(ex, t)
        assert D.s.tolist() == [1]
        assert D.x[0] == pytest.approx(values[t])
    assert len(descent(ex, 0)) == 0
    # a jump at s = t is in its own descent with x = Delta
    assert descent(ex, 1).x.tolist() == [1.0]


def _descent_bruteforce(path, t):
    out = []
    for s, delta in zip(path.jump_index.tolist(), path.jump_size.tolist()):
        if s > t:
            continue
        inf = min(path.values[s : t + 1])
        if path.values[s - 1] <= inf:
            out.append((s, min(inf - path.values[s - 1], delta)))
    return out


@given(seed=st.integers(0, 2**32), n=st.integers(2, 120))
def test_descent_matches_bruteforce(seed, n):
    tree = random_tree(make_offspring_law(1.5), n, seed)
    ex = excursion_from_cgw(tree, 3.0, 1.5)
    t = seed % (ex.m + 1)
    D = descent(ex, t)
    ref = _descent_bruteforce(ex, t)
    assert D.s.tolist() == [s for s, _ in ref]
    assert np.allclose(D.x, [x for _, x in ref])
    assert np.all((D.x >= 0) & (D.x <= D.delta))
    assert np.all((D.u >= 0) & (D.u <= 1))


@given(seed=st.integers(0, 2**32))
def test_descent_is_nested(seed):
    ex = excursion_from_bridge(sample_stable_bridge(1.5, 150, np.random.default_rng(seed)))
    rng = np.random.default_rng(seed + 1)
    for w in rng.integers(ex.m + 1, size=5).tolist():
        Dw = set(descent(ex, w).s.tolist())
        for t in Dw:
            assert set(descent(ex, t).s.tolist()) <= Dw


def test_descent_bounds():
    with pytest.raises(IndexError):
        descent(_path([0, 1, 0]), 3)


# files ------------------------------------------------------------------------------


def test_path_csv_round_trip(tmp_path):
    p = sample_stable_path(1.5, 50, np.random.default_rng(5), seed=2**64 - 1)
    dest = tmp_path / "p.csv"
    write_path_csv(p, dest)
    lines = dest.read_text().splitlines()
    assert lines[0] == f"# alpha=1.5,m=50,seed={2**64 - 1}"
    back = read_path_csv(dest)
    assert np.array_equal(back.values, p.values)
    assert np.array_equal(back.jump_index, p.jump_index)
    assert np.array_equal(back.jump_size, p.jump_size)
    assert back.seed == p.seed


@pytest.mark.parametrize(
    "kwargs",
    [dict(values=[0.0]), dict(values=[0, np.inf]), dict(values=[0, 1, 0], jump_index=[1], jump_size=[-1.0]), dict(values=[0, 1, 0], jump_index=[0], jump_size=[1.0])],
)
def test_invalid_paths(kwargs):
    kwargs.setdefault("jump_index", [])
    kwargs.setdefault("jump_size", [])
    with pytest.raises(ValueError):
        StablePath(alpha=1.5, **kwargs)


def test_invalid_excursion():
    with pytest.raises(ValueError):
        ExcursionPath(alpha=1.5, values=[0, -1, 0], jump_index=[], jump_size=[])
