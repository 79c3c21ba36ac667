"""Command-line harness: configure, run, and aggregate experiments.

Verbs: ``run`` (execute every variant x instance x seed combination, one
trace CSV and one summary JSON per run, plus a manifest), ``sweep`` (run
everything and reduce to 25th/50th/75th percentile gap curves on a common
data-pass grid), ``rounds`` (reduce existing traces to the idealized
parallel-rounds table), and ``list-problems``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.  Output is
data only: CSV (comma-separated, header row, UTF-8, LF, reals with 17
significant digits) and JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .problem import rounds_metric
from .solver import TRACE_COLUMNS, RunResult, SolverConfig, run
from .testbed import (
    FAMILIES,
    DatasetMode,
    GeneratedProblem,
    make_problem,
    random_init,
    reference_optimum,
)


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

_TOP_KEYS = {
    "name",
    "problem",
    "instance_seeds",
    "algorithm_seeds",
    "solver",
    "variants",
    "sweep",
    "rounds",
}
_PROBLEM_KEYS = {"family", "mode", "n", "p", "lam"}
_SOLVER_KEYS = {
    "model_class",
    "delta0",
    "delta_max",
    "gamma",
    "eta1",
    "eta2",
    "accuracy_constant",
    "pi_prob",
    "lipschitz_mode",
    "budget",
    "tol",
    "max_iterations",
}
_VARIANT_KEYS = {"sampling_mode", "r", "label", "lipschitz_mode"}
_SWEEP_KEYS = {"grid_points"}
_ROUNDS_KEYS = {"machine_sizes", "tolerances"}


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _parse_eta2(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"solver.eta2: cannot parse {value!r}")
    return float(value)


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    return validate_experiment_config(raw)


def validate_experiment_config(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _reject_unknown(raw, _TOP_KEYS, "config root")

    problem = raw.get("problem")
    if not isinstance(problem, dict):
        raise ConfigError("problem: section is required")
    _reject_unknown(problem, _PROBLEM_KEYS, "problem")
    family = problem.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"problem.family: expected one of {FAMILIES}, got {family!r}")
    mode = problem.get("mode")
    if mode not in tuple(m.value for m in DatasetMode):
        raise ConfigError(
            f"problem.mode: expected one of "
            f"{tuple(m.value for m in DatasetMode)}, got {mode!r}"
        )

    seeds = raw.get("instance_seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) for s in seeds
    ):
        raise ConfigError("instance_seeds: must be a nonempty list of integers")
    algo_seeds = raw.get("algorithm_seeds", [0])
    if not isinstance(algo_seeds, list) or not algo_seeds or not all(
        isinstance(s, int) for s in algo_seeds
    ):
        raise ConfigError("algorithm_seeds: must be a nonempty list of integers")

    solver = raw.get("solver")
    if not isinstance(solver, dict) or "model_class" not in solver:
        raise ConfigError("solver: section with model_class is required")
    _reject_unknown(solver, _SOLVER_KEYS, "solver")
    if solver["model_class"] not in ("fo", "zo", "fogn", "zogn"):
        raise ConfigError(
            f"solver.model_class: expected fo/zo/fogn/zogn, got "
            f"{solver['model_class']!r}"
        )
    if "eta2" in solver:
        solver = dict(solver)
        solver["eta2"] = _parse_eta2(solver["eta2"])
        raw = dict(raw)
        raw["solver"] = solver

    variants = raw.get("variants")
    if not isinstance(variants, list) or not variants:
        raise ConfigError("variants: must be a nonempty list")
    for idx, variant in enumerate(variants):
        if not isinstance(variant, dict):
            raise ConfigError(f"variants[{idx}]: must be an object")
        _reject_unknown(variant, _VARIANT_KEYS, f"variants[{idx}]")
        smode = variant.get("sampling_mode")
        if smode not in ("uniform", "dynamic", "full"):
            raise ConfigError(
                f"variants[{idx}].sampling_mode: expected uniform/dynamic/full, "
                f"got {smode!r}"
            )
        if smode != "full" and not isinstance(variant.get("r"), int):
            raise ConfigError(f"variants[{idx}].r: integer resource size required")
        if "lipschitz_mode" in variant and variant["lipschitz_mode"] not in (
            "known",
            "secant",
        ):
            raise ConfigError(
                f"variants[{idx}].lipschitz_mode: expected known/secant"
            )

    if "sweep" in raw:
        _reject_unknown(raw["sweep"], _SWEEP_KEYS, "sweep")
    if "rounds" in raw:
        _reject_unknown(raw["rounds"], _ROUNDS_KEYS, "rounds")
    return raw


def variant_label(variant: dict) -> str:
    if variant.get("label"):
        return str(variant["label"])
    label = variant["sampling_mode"]
    if variant["sampling_mode"] != "full":
        label += f"-r{variant['r']}"
    if variant.get("lipschitz_mode") == "secant":
        label += "-secant"
    return label


# ----------------------------------------------------------------------
# run execution
# ----------------------------------------------------------------------


def _make_instance(problem_cfg: dict, instance_seed: int) -> GeneratedProblem:
    family = problem_cfg["family"]
    kwargs = {}
    if family == "logistic":
        kwargs["n"] = problem_cfg.get("n", 256)
        kwargs["p"] = problem_cfg.get("p", 256)
        kwargs["lam"] = problem_cfg.get("lam", 0.1)
        kwargs["seed"] = instance_seed
    else:
        kwargs["p"] = problem_cfg.get("p", 16)
    return make_problem(family, problem_cfg["mode"], **kwargs)


def _initial_point(family: str, n: int, instance_seed: int) -> np.ndarray:
    if family == "logistic":
        return np.zeros(n)
    return random_init(n, seed=instance_seed)


def _solver_config(task: dict) -> SolverConfig:
    solver = dict(task["solver"])
    variant = task["variant"]
    solver["sampling_mode"] = variant["sampling_mode"]
    solver["r"] = variant.get("r", 1)
    if "lipschitz_mode" in variant:
        solver["lipschitz_mode"] = variant["lipschitz_mode"]
    solver["seed"] = task["algorithm_seed"]
    return SolverConfig(**solver)


def format_real(x: float) -> str:
    return format(float(x), ".17g")


def write_trace_csv(path: Path, result: RunResult) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in result.rows:
            writer.writerow(
                [
                    row.iteration,
                    format_real(row.f_gap),
                    format_real(row.effective_data_passes),
                    row.batch_size_I,
                    row.batch_size_J,
                    format_real(row.delta),
                    format_real(row.rho),
                    "true" if row.accepted else "false",
                    f"0x{row.evaluated_mask:x}",
                ]
            )
    os.replace(tmp, path)


def read_trace_csv(path: Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for record in csv.DictReader(fh):
            rows.append(
                {
                    "iteration": int(record["iteration"]),
                    "f_gap": float(record["f_gap"]),
                    "effective_data_passes": float(record["effective_data_passes"]),
                    "batch_size_I": int(record["batch_size_I"]),
                    "batch_size_J": int(record["batch_size_J"]),
                    "delta": float(record["delta"]),
                    "rho": float(record["rho"]),
                    "accepted": record["accepted"] == "true",
                    "evaluated_mask": int(record["evaluated_mask"], 16),
                }
            )
    return rows


def _atomic_write_json(path: Path, payload: dict) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def execute_task(task: dict) -> dict:
    """Run one (variant, instance, seed) combination and write its files."""
    gp = _make_instance(task["problem"], task["instance_seed"])
    config = _solver_config(task)
    x0 = _initial_point(gp.family, gp.problem.n, task["instance_seed"])
    f_star = task.get("f_star")
    if f_star is None and gp.f_star is not None:
        f_star = gp.f_star
    result = run(gp.problem, config, x0, f_star=f_star)

    out_dir = Path(task["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"inst{task['instance_seed']}_seed{task['algorithm_seed']}"
    trace_path = out_dir / f"{stem}.csv"
    summary_path = out_dir / f"{stem}.json"
    write_trace_csv(trace_path, result)

    summary = {
        "variant": task["label"],
        "sampling_mode": config.sampling_mode,
        "r": config.r,
        "lipschitz_mode": config.lipschitz_mode,
        "family": gp.family,
        "mode": gp.mode,
        "instance_seed": task["instance_seed"],
        "algorithm_seed": task["algorithm_seed"],
        "final_gap": result.f_gap_final,
        "final_f": result.f_final,
        "total_evaluations": result.ledger.total(),
        "batch_count": result.ledger.batch_count,
        "data_passes": result.data_passes,
        "iterations": result.iterations,
        "stop_reason": result.stop_reason,
        "trace": str(trace_path),
    }
    _atomic_write_json(summary_path, summary)
    return summary


def _build_tasks(cfg: dict, out: Path, seed_offset: int) -> list[dict]:
    tasks = []
    needs_reference = (
        cfg["problem"]["family"] == "logistic" and cfg["solver"].get("tol") is not None
    )
    f_stars: dict[int, float] = {}
    if needs_reference:
        for iseed in cfg.get("instance_seeds", [0]):
            gp = _make_instance(cfg["problem"], iseed)
            f_stars[iseed] = reference_optimum(gp).f_star
    for variant in cfg["variants"]:
        label = variant_label(variant)
        for iseed in cfg.get("instance_seeds", [0]):
            for aseed in cfg.get("algorithm_seeds", [0]):
                tasks.append(
                    {
                        "problem": cfg["problem"],
                        "solver": cfg["solver"],
                        "variant": variant,
                        "label": label,
                        "instance_seed": iseed,
                        "algorithm_seed": aseed + seed_offset,
                        "out_dir": str(out / label),
                        "f_star": f_stars.get(iseed),
                    }
                )
    return tasks


def _run_all(cfg: dict, out: Path, jobs: int, seed_offset: int) -> list[dict]:
    tasks = _build_tasks(cfg, out, seed_offset)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(execute_task, tasks))
    else:
        summaries = [execute_task(task) for task in tasks]
    manifest = {
        "name": cfg.get("name", "experiment"),
        "problem": cfg["problem"],
        "solver": cfg["solver"],
        "runs": summaries,
    }
    _atomic_write_json(out / "manifest.json", manifest)
    return summaries


# ----------------------------------------------------------------------
# aggregation
# ----------------------------------------------------------------------


def percentile_nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile: the ceil(q/100 * N)-th smallest value."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("no values")
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def gap_on_grid(rows: list[dict], grid: np.ndarray) -> np.ndarray:
    """Step interpolation: the gap of the last trace row at or below each
    grid point (carrying the initial gap before the first row and the final
    gap after the last)."""
    passes = np.array([r["effective_data_passes"] for r in rows])
    gaps = np.array([r["f_gap"] for r in rows])
    idx = np.searchsorted(passes, grid, side="right") - 1
    idx = np.clip(idx, 0, len(rows) - 1)
    return gaps[idx]


def write_sweep_csv(path: Path, cfg: dict, summaries: list[dict]) -> None:
    grid_points = int(cfg.get("sweep", {}).get("grid_points", 101))
    budget = float(cfg["solver"].get("budget", 100.0))
    grid = np.linspace(0.0, budget, grid_points)
    by_variant: dict[str, list[np.ndarray]] = {}
    for summary in summaries:
        rows = read_trace_csv(Path(summary["trace"]))
        by_variant.setdefault(summary["variant"], []).append(gap_on_grid(rows, grid))
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "effective_data_passes", "q25", "q50", "q75"])
        for variant in sorted(by_variant):
            curves = by_variant[variant]
            for j, g in enumerate(grid):
                samples = [float(curve[j]) for curve in curves]
                writer.writerow(
                    [
                        variant,
                        format_real(g),
                        format_real(percentile_nearest_rank(samples, 25)),
                        format_real(percentile_nearest_rank(samples, 50)),
                        format_real(percentile_nearest_rank(samples, 75)),
                    ]
                )
    os.replace(tmp, path)


def batches_to_tolerance(rows: list[dict], r: int, tau: float) -> Optional[int]:
    """Number of size-r batch slots issued up to the first row with gap <=
    tau (inclusive); None when the tolerance is never reached."""
    count = 0
    for row in rows:
        count += math.ceil(row["batch_size_I"] / r) + math.ceil(
            row["batch_size_J"] / r
        )
        if row["f_gap"] <= tau:
            return count
    return None


def write_rounds_csv(path: Path, cfg: dict, manifest: dict) -> None:
    rounds_cfg = cfg.get("rounds", {})
    machine_sizes = rounds_cfg.get("machine_sizes", [1])
    tolerances = rounds_cfg.get("tolerances", [1e-5])
    runs = manifest["runs"]
    by_variant: dict[str, list[dict]] = {}
    for summary in runs:
        by_variant.setdefault(summary["variant"], []).append(summary)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["variant", "r", "mu", "tau", "median_log2_rounds", "n_reached", "n_censored"]
        )
        for variant in sorted(by_variant):
            group = by_variant[variant]
            r = int(group[0]["r"])
            traces = [read_trace_csv(Path(s["trace"])) for s in group]
            for tau in tolerances:
                counts = [batches_to_tolerance(rows, r, float(tau)) for rows in traces]
                reached = [c for c in counts if c is not None]
                censored = len(counts) - len(reached)
                for mu in machine_sizes:
                    if reached:
                        logs = [
                            math.log2(rounds_metric(c, r, int(mu))) for c in reached
                        ]
                        median = format_real(percentile_nearest_rank(logs, 50))
                    else:
                        median = "censored"
                    writer.writerow(
                        [variant, r, int(mu), format_real(float(tau)), median,
                         len(reached), censored]
                    )
    os.replace(tmp, path)


# ----------------------------------------------------------------------
# entry points
# ----------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.get("name", "results"))
    out.mkdir(parents=True, exist_ok=True)
    _run_all(cfg, out, args.jobs, args.seed_offset)
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if not cfg.get("instance_seeds", [0]):
        raise ConfigError("instance_seeds: at least one instance is required")
    out = Path(args.out or cfg.get("name", "results"))
    out.mkdir(parents=True, exist_ok=True)
    summaries = _run_all(cfg, out, args.jobs, args.seed_offset)
    write_sweep_csv(out / "sweep.csv", cfg, summaries)
    return 0


def cmd_rounds(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.get("name", "results"))
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        print(f"error: no manifest at {manifest_path}; run 'run' first", file=sys.stderr)
        return 3
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    write_rounds_csv(out / "rounds.csv", cfg, manifest)
    return 0


def cmd_list_problems(args) -> int:
    print("family      modes                                defaults")
    print("logistic    balanced, progressive, imbalanced    n=256 p=256 lam=0.1")
    print("rosenbrock  balanced, progressive, imbalanced    n=p=16 (p even)")
    print("cube        balanced, progressive, imbalanced    n=p=16")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="samtr", description="finite-sum trust-region experiment harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("run", cmd_run),
        ("sweep", cmd_sweep),
        ("rounds", cmd_rounds),
    ):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True)
        cmd.add_argument("--out", default=None)
        cmd.add_argument("--jobs", type=int, default=1)
        cmd.add_argument("--seed-offset", dest="seed_offset", type=int, default=0)
        cmd.set_defaults(fn=fn)
    lp = sub.add_parser("list-problems")
    lp.set_defaults(fn=cmd_list_problems)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
