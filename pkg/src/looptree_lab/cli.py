"""``looptree-lab`` command line.

Usage::

    looptree-lab <experiment> [--alpha F] [--n N] [--trials T] [--seed S]
                 [--out PATH] [--radii a:b:k] [--times a:b:k] [--config FILE]

A config file holds flat ``key = value`` lines (``#`` starts a comment);
command-line flags override it.  Exit status: 0 all checks pass, 1 a check
failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_INT_KEYS = {"n", "trials", "seed", "trees", "workers"}
_FLOAT_KEYS = {"alpha"}
_GRID_KEYS = {"radii", "times"}
_LIST_KEYS = {"alphas"}


class UsageError(ValueError):
    pass


def parse_grid(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must look like a:b:k, got {text!r}")
    try:
        a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}") from exc
    return a, b, k


def _convert(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r}") from exc
    if key in _GRID_KEYS:
        return parse_grid(value)
    if key in _LIST_KEYS:
        try:
            return tuple(float(v) for v in value.split(","))
        except ValueError as exc:
            raise UsageError(f"bad list for {key}: {value!r}") from exc
    return value


def read_config_file(path) -> dict:
    """Parse flat ``key = value`` text; keys starting with ``tol.`` set tolerances."""
    out: dict = {}
    tolerances: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("tol."):
            try:
                tolerances[key[4:]] = float(value)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: bad tolerance") from exc
            continue
        if key not in {f for f in ExperimentConfig.__dataclass_fields__} - {"tolerances"}:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, value)
    if tolerances:
        out["tolerances"] = tolerances
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="looptree-lab", description="Seeded looptree experiments.")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--alpha", type=float)
    p.add_argument("--n", type=int, help="tree size")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, help="master seed (64-bit unsigned)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--radii", type=parse_grid, metavar="a:b:k")
    p.add_argument("--times", type=parse_grid, metavar="a:b:k")
    p.add_argument("--trees", type=int, help="independent trees for the exit-time run")
    p.add_argument("--alphas", type=lambda s: _convert("alphas", s), metavar="a1,a2,...")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    values.pop("experiment", None)
    for key in ("alpha", "n", "trials", "seed", "out", "radii", "times", "trees", "alphas", "workers"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    return ExperimentConfig(experiment=args.experiment, **values)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_PASS
    try:
        config = make_config(args)
    except (UsageError, ValueError, TypeError, OSError) as exc:
        print(f"looptree-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        summary = run_experiment(config)
    except RuntimeError as exc:
        print(f"looptree-lab: {exc}", file=sys.stderr)
        return EXIT_FAIL
    status = "PASS" if summary["passed"] else "FAIL"
    print(f"{config.experiment}: {status}")
    print(json.dumps(summary["results"].get("checks", {}), sort_keys=True))
    print(f"outputs in {config.out}: {', '.join(summary['files'] + [config.experiment + '_summary.json'])}")
    return EXIT_PASS if summary["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
