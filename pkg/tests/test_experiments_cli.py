from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from looptree_lab import __version__
from looptree_lab.cli import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, UsageError, main, parse_grid, read_config_file
from looptree_lab.experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    FitResult,
    InsufficientRangeError,
    _grid,
    _holm,
    auto_heat_window,
    fit_loglog,
    run_experiment,
    seed_list,
    toy_two_jump_excursion,
)

# small configurations that finish in seconds
SMALL = {
    "volume": dict(n=2000, trials=4),
    "heat": dict(n=300, trials=3),
    "exit": dict(n=3000, trials=40, trees=4, radii=(2, 8, 3)),
    "invariance": dict(n=200, trials=20),
    "gem": dict(trials=2000),
    "metric": dict(n=60, trials=3),
    "reduction": dict(n=20, trials=5),
    "stable": dict(trials=2000),
    "dwass": dict(trials=5000),
}


# config -----------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(experiment="nope"),
        dict(experiment="gem", alpha=2.0),
        dict(experiment="gem", trials=0),
        dict(experiment="gem", n=0),
        dict(experiment="gem", seed=-1),
        dict(experiment="gem", seed=2**64),
        dict(experiment="volume", radii=(0.5, 0.1, 5)),
        dict(experiment="volume", radii=(0.1, 0.5, 1)),
        dict(experiment="metric", alphas=(1.5, 2.5)),
        dict(experiment="gem", workers=0),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ExperimentConfig(**kwargs)


def test_config_hash():
    a = ExperimentConfig("gem", seed=1)
    assert a.hash() == ExperimentConfig("gem", seed=1, out="elsewhere", workers=4).hash()
    assert a.hash() != ExperimentConfig("gem", seed=2).hash()
    assert a.hash() != ExperimentConfig("gem", seed=1, tolerances={"slope_band": 0.3}).hash()
    assert len(a.hash()) == 16


def test_config_defaults_and_tolerances():
    c = ExperimentConfig("volume", tolerances={"slope_band": 0.3})
    assert c.get("n", 7) == 7
    assert c.tol("slope_band", 0.2) == 0.3
    assert c.tol("slope_agreement", 0.05) == 0.05


def test_seed_list():
    s = seed_list(0, 5)
    assert s == seed_list(0, 5)
    assert s[:3] == seed_list(0, 3)
    assert len(set(s)) == 5
    assert all(0 <= x < 2**64 for x in s)
    assert s != seed_list(1, 5)


# fitting ------------------------------------------------------------------------------


def test_fit_exact_power():
    x = np.geomspace(1, 100, 12)
    rows = np.vstack([3.0 * x**1.5, 5.0 * x**1.5])
    fit = fit_loglog(x, rows)
    assert fit.slope == pytest.approx(1.5, abs=1e-12)
    assert fit.ci_halfwidth == pytest.approx(0.0, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.window == (1.0, 100.0)


def test_fit_window_and_bootstrap():
    rng = np.random.default_rng(0)
    x = np.geomspace(1, 100, 20)
    rows = x**1.5 * np.exp(rng.normal(0, 0.2, size=(30, 20)))
    mask = (x >= 3) & (x <= 50)
    fit = fit_loglog(x, rows, mask, rng=np.random.default_rng(1))
    assert abs(fit.slope - 1.5) <= 3 * fit.ci_halfwidth
    assert fit.ci_halfwidth > 0
    assert x[mask][0] == fit.window[0] and x[mask][-1] == fit.window[1]
    assert fit.n_points == mask.sum()
    again = fit_loglog(x, rows, mask, rng=np.random.default_rng(1))
    assert again == fit
    with pytest.raises(InsufficientRangeError):
        fit_loglog(x, rows, x > 80)
    with pytest.raises(ValueError):
        FitResult(1.0, 0.0, -0.1, 1.0, (1, 2), 3)


def test_fit_log_of_mean():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    rows = np.vstack([x**2, 3 * x**2])
    assert fit_loglog(x, rows, log_of_mean=True).slope == pytest.approx(2.0)


def test_holm_matches_hand_computation():
    p = [0.01, 0.04, 0.03, 0.5]
    # sorted 0.01, 0.03, 0.04, 0.5 -> 0.04, 0.09, 0.09 (monotone), 0.5
    assert _holm(p) == pytest.approx([0.04, 0.09, 0.09, 0.5])
    assert _holm([0.9, 0.9]) == [1.0, 1.0]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
def test_holm_properties(p):
    adj = _holm(p)
    assert all(a >= q - 1e-15 for a, q in zip(adj, p))
    assert all(0 <= a <= 1 for a in adj)
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(np.asarray(adj)[order]) >= -1e-15)


def test_grids():
    assert _grid(None, (8, 128, 5), integer=True).tolist() == [8, 16, 32, 64, 128]
    assert _grid((0.05, 0.1, 2), None, geometric=False).tolist() == [0.05, 0.1]


def test_auto_heat_window():
    d = np.array([100.0, 90, 80, 50, 30, 21, 19, 10, 5, 2, 1])
    assert auto_heat_window(d, 1, 20.0) == (1, 5)


def test_toy_excursion_is_valid():
    ex = toy_two_jump_excursion(np.random.default_rng(0))
    assert len(ex.jump_index) == 2
    assert ex.values[0] == 0 and ex.values[-1] == 0
    assert np.all(ex.values[1:-1] > 0)


# runners ------------------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(EXPERIMENTS))
def test_runner_outputs_are_stamped(name, tmp_path):
    cfg = ExperimentConfig(name, out=str(tmp_path), **SMALL[name])
    summary = run_experiment(cfg)
    assert isinstance(summary["passed"], bool)
    assert summary["config_hash"] == cfg.hash()
    assert summary["version"] == __version__
    for f in summary["files"]:
        head = (tmp_path / f).read_text().splitlines()[:3]
        assert head[0] == f"# looptree-lab {__version__}"
        assert f"config_hash={cfg.hash()}" in head[1]
        assert head[2] == "# seeds=" + ",".join(map(str, summary["seeds"]))
    text = (tmp_path / f"{name}_summary.json").read_text()
    assert json.loads(text) == summary
    assert "time" not in json.dumps(summary["results"]).lower() or name in ("heat", "exit", "invariance")


def test_identity_config_smoke(tmp_path):
    for name in sorted(EXPERIMENTS):
        summary = run_experiment(ExperimentConfig(name, n=3, trials=1, out=str(tmp_path / name)))
        assert (tmp_path / name / f"{name}_summary.json").exists()
        assert isinstance(summary["passed"], bool)


def test_gem_run_emits_table(tmp_path):
    run_experiment(ExperimentConfig("gem", trials=2000, out=str(tmp_path)))
    lines = [l for l in (tmp_path / "gem_moments.csv").read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "k,exact_mean,empirical_mean,se,exact_second_moment,empirical_second_moment"
    assert len(lines) == 21


def test_workers_do_not_change_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(ExperimentConfig("metric", n=60, trials=4, out=str(a)))
    run_experiment(ExperimentConfig("metric", n=60, trials=4, out=str(b), workers=2))
    for f in sorted(p.name for p in a.iterdir()):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_run_experiment_wraps_errors(tmp_path):
    with pytest.raises(RuntimeError, match="heat"):
        run_experiment(ExperimentConfig("heat", n=1, trials=1, out=str(tmp_path)))


def test_failed_fit_is_flagged(tmp_path):
    s = run_experiment(ExperimentConfig("volume", n=50, trials=2, radii=(1.0, 2.0, 3), out=str(tmp_path)))
    assert not s["passed"]
    assert s["results"]["flag"] == "insufficient dynamic range"


# CLI ----------------------------------------------------------------------------------


def test_parse_grid():
    assert parse_grid("8:128:5") == (8.0, 128.0, 5)
    for bad in ("1:2", "a:b:c", "1:2:3.5"):
        with pytest.raises(UsageError):
            parse_grid(bad)


def test_config_file(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nn = 60\ntrials=3  # inline\nalphas = 1.2,1.8\nradii = 1:2:3\ntol.metric_tol = 1e-8\n")
    assert read_config_file(path) == {
        "n": 60,
        "trials": 3,
        "alphas": (1.2, 1.8),
        "radii": (1.0, 2.0, 3),
        "tolerances": {"metric_tol": 1e-8},
    }
    path.write_text("colour = blue\n")
    with pytest.raises(UsageError):
        read_config_file(path)
    path.write_text("just words\n")
    with pytest.raises(UsageError):
        read_config_file(path)


def test_cli_pass_and_flags_override_file(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n = 10000\ntrials = 3\n")
    out = tmp_path / "out"
    code = main(["metric", "--config", str(cfg), "--n", "60", "--out", str(out)])
    assert code == EXIT_PASS
    summary = json.loads((out / "metric_summary.json").read_text())
    assert summary["config"]["n"] == 60 and summary["config"]["trials"] == 3
    assert "metric: PASS" in capsys.readouterr().out


def test_cli_failure_exit_code(tmp_path):
    # an impossible tolerance turns the check into a failure
    cfg = tmp_path / "c.cfg"
    cfg.write_text("tol.slope_band = -1\n")
    assert main(["gem", "--trials", "200", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_FAIL


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    assert main(["heat", "--n", "1", "--trials", "1", "--out", str(tmp_path)]) == EXIT_FAIL
    assert "failed" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [[], ["teleport"], ["gem", "--alpha", "2.5"], ["gem", "--radii", "1:2"], ["gem", "--trials", "x"], ["gem", "--config", "/no/such/file"]],
)
def test_cli_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_cli_version(capsys):
    assert main(["--version"]) == EXIT_PASS
    assert __version__ in capsys.readouterr().out


def test_cli_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["reduction", "--n", "20", "--trials", "5", "--seed", "7", "--out", str(d)]) == EXIT_PASS
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert all((a / f).read_bytes() == (b / f).read_bytes() for f in names)
