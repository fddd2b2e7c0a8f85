"""Experiment driver: dataset generation, runs, alpha sweeps, and reports.

A sweep executes every (policy, alpha, seed) combination of a plan and
writes flat-file outputs into the plan's output directory:

    plan.json       the fully resolved plan (audit trail for every number)
    results.csv     one row per successful run (deterministic bytes)
    timings.csv     per-run wall-clock times, kept out of results.csv so
                    reruns of the same plan are byte-identical
    summary.csv     per-(policy, alpha) means and stdevs over seeds
    envelope_*.csv  per-policy trade-off envelopes from seed-averaged points
    failures.csv    runs that errored (only written when something failed)
    series/         per-run (step, cndcg, unfairness) series in online mode

Plans come from a JSON config file, with CLI flags overriding file values
and built-in defaults filling the rest.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .metrics import RESULT_FIELDS, RunResult, format_float, tradeoff_envelope
from .plots import write_tradeoff_svg
from .rankers import POLICY_KINDS
from .sim import SimConfig, run_offline, run_online
from .synth import Dataset, GeneratorSpec, ScenarioSpec, generate_dataset, load_dataset, save_dataset

__all__ = [
    "DEFAULT_ALPHA_GRID",
    "DEFAULT_SEEDS",
    "ExperimentPlan",
    "cmd_generate",
    "cmd_report",
    "cmd_run",
    "cmd_sweep",
    "effective_alpha_grid",
    "main",
]

DEFAULT_ALPHA_GRID = (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DETERMINISTIC_FIELDS = RESULT_FIELDS[:-1]  # wall_ms lives in timings.csv


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce a sweep."""

    out_dir: str
    dataset: str | None = None
    generator: GeneratorSpec | None = None
    scenario: str = "common"
    policies: tuple[str, ...] = POLICY_KINDS
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    sim: SimConfig = SimConfig()
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.policies or not self.alpha_grid or not self.seeds:
            raise ValueError("policies, alpha_grid, and seeds must be nonempty")
        for policy in self.policies:
            if policy not in POLICY_KINDS:
                raise ValueError(f"unknown policy {policy!r}; expected one of {POLICY_KINDS}")
        if self.dataset is None and self.generator is None:
            raise ValueError("plan needs either a dataset path or a generator spec")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    def to_json(self) -> str:
        data = {
            "out_dir": self.out_dir,
            "dataset": self.dataset,
            "generator": asdict(self.generator) if self.generator else None,
            "scenario": self.scenario,
            "policies": list(self.policies),
            "alpha_grid": list(self.alpha_grid),
            "seeds": list(self.seeds),
            "sim": asdict(self.sim),
            "workers": self.workers,
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"


def effective_alpha_grid(policy: str, grid: Sequence[float]) -> list[float]:
    """The alpha values actually run for a policy.

    TopK and PoorK take no balance parameter (single run at 0); MMFStar is
    only defined on [0, 1].
    """
    if policy in ("TopK", "PoorK"):
        return [0.0]
    if policy == "MMFStar":
        return [a for a in grid if 0.0 <= a <= 1.0]
    return list(grid)


# ---------------------------------------------------------------------------
# Plan resolution
# ---------------------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise ValueError("config file must contain a JSON object")
    return config


def _build_sim(config: dict, args: argparse.Namespace) -> SimConfig:
    sim_cfg = dict(config.get("sim", {}))
    known = {f.name for f in fields(SimConfig)}
    unknown = set(sim_cfg) - known
    if unknown:
        raise ValueError(f"unknown sim config keys: {sorted(unknown)}")
    if getattr(args, "mode", None):
        sim_cfg["mode"] = args.mode
    if getattr(args, "steps", None) is not None:
        sim_cfg["total_steps"] = args.steps
    return SimConfig(**sim_cfg)


def _build_generator(config: dict, args: argparse.Namespace) -> GeneratorSpec | None:
    gen_cfg = config.get("generator")
    if gen_cfg is None and getattr(args, "dataset", None) is None and config.get("dataset") is None:
        gen_cfg = {}
    if gen_cfg is None:
        return None
    known = {f.name for f in fields(GeneratorSpec)}
    unknown = set(gen_cfg) - known
    if unknown:
        raise ValueError(f"unknown generator config keys: {sorted(unknown)}")
    if getattr(args, "seed", None) is not None:
        gen_cfg = {**gen_cfg, "seed": args.seed}
    return GeneratorSpec(**gen_cfg)


def resolve_plan(args: argparse.Namespace) -> ExperimentPlan:
    config = _load_config(getattr(args, "config", None))
    dataset = getattr(args, "dataset", None) or config.get("dataset")
    out_dir = getattr(args, "out", None) or config.get("out_dir")
    if out_dir is None:
        raise ValueError("an output directory is required (--out or config out_dir)")
    scenario = getattr(args, "scenario", None) or config.get("scenario", "common")
    ScenarioSpec.by_name(scenario)  # validate early
    sim = _build_sim(config, args)
    generator = None if dataset else _build_generator(config, args)
    policies = config.get("policies")
    if getattr(args, "policy", None):
        policies = [args.policy]
    if policies is None:
        policies = [p for p in POLICY_KINDS if not (sim.mode == "online" and p == "EquityRankV")]
    alpha_grid = config.get("alpha_grid", list(DEFAULT_ALPHA_GRID))
    if getattr(args, "alpha", None) is not None:
        alpha_grid = [args.alpha]
    seeds = config.get("seeds", list(DEFAULT_SEEDS))
    if getattr(args, "seed", None) is not None and dataset is not None:
        seeds = [args.seed]
    return ExperimentPlan(
        out_dir=str(out_dir),
        dataset=str(dataset) if dataset else None,
        generator=generator,
        scenario=scenario,
        policies=tuple(policies),
        alpha_grid=tuple(float(a) for a in alpha_grid),
        seeds=tuple(int(s) for s in seeds),
        sim=sim,
        workers=int(getattr(args, "workers", 1) or 1),
    )


def _plan_dataset(plan: ExperimentPlan) -> Dataset:
    if plan.dataset is not None:
        return load_dataset(plan.dataset)
    return generate_dataset(plan.generator, ScenarioSpec.by_name(plan.scenario))


# ---------------------------------------------------------------------------
# Run execution
# ---------------------------------------------------------------------------

_POOL_DATASET: Dataset | None = None
_POOL_SIM: SimConfig | None = None


def _pool_init(dataset: Dataset, sim: SimConfig) -> None:
    global _POOL_DATASET, _POOL_SIM
    _POOL_DATASET = dataset
    _POOL_SIM = sim


def _execute_run(dataset: Dataset, sim: SimConfig, policy: str, alpha: float, seed: int):
    if sim.mode == "online":
        result, trace = run_online(dataset, policy, alpha, seed, sim)
        return result, trace.checkpoints
    return run_offline(dataset, policy, alpha, seed, sim), None


def _pool_run(spec: tuple[str, float, int]):
    policy, alpha, seed = spec
    try:
        result, checkpoints = _execute_run(_POOL_DATASET, _POOL_SIM, policy, alpha, seed)
        return ("ok", result, checkpoints)
    except Exception as exc:  # noqa: BLE001 - failures are recorded, sweep continues
        return ("err", f"{type(exc).__name__}: {exc}", None)


def _series_filename(policy: str, alpha: float, seed: int) -> str:
    return f"{policy}_a{alpha!r}_s{seed}.csv"


def _write_series(path: Path, checkpoints: list[tuple[int, float, float]]) -> None:
    lines = ["step,cndcg,unfairness"]
    lines += [f"{t},{format_float(c)},{format_float(u)}" for t, c, u in checkpoints]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_sweep(plan: ExperimentPlan) -> Path:
    """Execute every (policy, alpha, seed) run of the plan and write outputs."""
    dataset = _plan_dataset(plan)
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(plan.to_json(), encoding="utf-8")

    specs = [
        (policy, alpha, seed)
        for policy in plan.policies
        for alpha in effective_alpha_grid(policy, plan.alpha_grid)
        for seed in plan.seeds
    ]
    if not specs:
        raise ValueError("plan produced no runs (alpha grid empty after per-policy restriction)")
    if plan.workers > 1:
        with ProcessPoolExecutor(
            max_workers=plan.workers, initializer=_pool_init, initargs=(dataset, plan.sim)
        ) as pool:
            outcomes = list(pool.map(_pool_run, specs))
    else:
        _pool_init(dataset, plan.sim)
        outcomes = [_pool_run(spec) for spec in specs]

    results: list[RunResult] = []
    failures: list[tuple[str, float, int, str]] = []
    series_dir = out / "series"
    for (policy, alpha, seed), outcome in zip(specs, outcomes):
        status, payload, checkpoints = outcome
        if status == "ok":
            results.append(payload)
            if checkpoints:
                series_dir.mkdir(exist_ok=True)
                _write_series(series_dir / _series_filename(policy, alpha, seed), checkpoints)
        else:
            failures.append((policy, alpha, seed, payload))

    _write_results(out, results)
    _write_summary_and_envelopes(out, results)
    if failures:
        lines = ["policy,alpha,seed,error"]
        lines += [f"{p},{format_float(a)},{s},{json.dumps(msg)}" for p, a, s, msg in failures]
        (out / "failures.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


def _write_results(out: Path, results: list[RunResult]) -> None:
    rows = [",".join(DETERMINISTIC_FIELDS)]
    timing_rows = ["policy,alpha,seed,wall_ms"]
    for r in results:
        rows.append(
            ",".join(
                (
                    r.mode,
                    r.policy,
                    format_float(r.alpha),
                    str(r.seed),
                    format_float(r.effectiveness),
                    format_float(r.unfairness),
                    format_float(r.msd),
                    format_float(r.pearson),
                )
            )
        )
        timing_rows.append(f"{r.policy},{format_float(r.alpha)},{r.seed},{format_float(r.wall_time * 1000.0)}")
    (out / "results.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (out / "timings.csv").write_text("\n".join(timing_rows) + "\n", encoding="utf-8")


def _group_stats(results: list[RunResult]) -> dict[tuple[str, float], dict[str, float]]:
    groups: dict[tuple[str, float], list[RunResult]] = {}
    for r in results:
        groups.setdefault((r.policy, r.alpha), []).append(r)
    stats = {}
    for key, rs in groups.items():
        eff = np.array([r.effectiveness for r in rs])
        unf = np.array([r.unfairness for r in rs])
        msd = np.array([r.msd for r in rs])
        rho = np.array([r.pearson for r in rs])
        stats[key] = {
            "runs": len(rs),
            "mode": rs[0].mode,
            "effectiveness_mean": float(eff.mean()),
            "effectiveness_std": float(eff.std(ddof=1)) if len(rs) > 1 else 0.0,
            "unfairness_mean": float(unf.mean()),
            "unfairness_std": float(unf.std(ddof=1)) if len(rs) > 1 else 0.0,
            "msd_mean": float(np.nanmean(msd)) if not np.isnan(msd).all() else math.nan,
            "pearson_mean": float(np.nanmean(rho)) if not np.isnan(rho).all() else math.nan,
        }
    return stats


def _write_summary_and_envelopes(out: Path, results: list[RunResult]) -> None:
    stats = _group_stats(results)
    lines = [
        "mode,policy,alpha,runs,effectiveness_mean,effectiveness_std,"
        "unfairness_mean,unfairness_std,msd_mean,pearson_mean"
    ]
    for (policy, alpha), s in sorted(stats.items()):
        lines.append(
            f"{s['mode']},{policy},{format_float(alpha)},{s['runs']},"
            f"{format_float(s['effectiveness_mean'])},{format_float(s['effectiveness_std'])},"
            f"{format_float(s['unfairness_mean'])},{format_float(s['unfairness_std'])},"
            f"{format_float(s['msd_mean'])},{format_float(s['pearson_mean'])}"
        )
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    for policy in sorted({policy for policy, _ in stats}):
        points = [
            (s["unfairness_mean"], s["effectiveness_mean"])
            for (p, _), s in sorted(stats.items())
            if p == policy and not math.isnan(s["unfairness_mean"])
        ]
        if not points:
            continue
        envelope = tradeoff_envelope(points)
        rows = ["threshold,effectiveness"]
        rows += [f"{format_float(u)},{format_float(e)}" for u, e in envelope]
        (out / f"envelope_{policy}.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_generate(spec: GeneratorSpec, scenario: ScenarioSpec, out_dir: str | Path, force: bool = False) -> Path:
    """Generate a synthetic dataset directory with a manifest."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise ValueError(f"output directory {out} is not empty; pass --force to overwrite")
    dataset = generate_dataset(spec, scenario)
    save_dataset(dataset, out)
    manifest = {"generator": asdict(spec), "scenario": scenario.name}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def cmd_run(
    dataset: Dataset,
    policy: str,
    alpha: float,
    seed: int,
    sim: SimConfig,
    out_dir: str | Path | None = None,
) -> RunResult:
    """Execute one run; optionally write result.csv (and series.csv online)."""
    result, checkpoints = _execute_run(dataset, sim, policy, alpha, seed)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.csv").write_text(RunResult.csv_header() + "\n" + result.csv_row() + "\n", encoding="utf-8")
        if checkpoints:
            _write_series(out / "series.csv", checkpoints)
    return result


def _read_csv_dicts(path: Path) -> list[dict[str, str]]:
    import csv as _csv

    if not path.is_file():
        raise ValueError(f"missing {path}")
    with open(path, newline="") as fh:
        return list(_csv.DictReader(fh))


def cmd_report(results_dir: str | Path, out_dir: str | Path | None = None) -> Path:
    """Summarize a sweep: ranking tables and the trade-off SVG."""
    results_dir = Path(results_dir)
    out = Path(out_dir) if out_dir is not None else results_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = _read_csv_dicts(results_dir / "results.csv")
    if not rows:
        raise ValueError(f"no runs recorded in {results_dir / 'results.csv'}")
    results = [
        RunResult(
            mode=row["mode"],
            policy=row["policy"],
            alpha=float(row["alpha"]),
            seed=int(row["seed"]),
            effectiveness=float(row["effectiveness"]),
            unfairness=float(row["unfairness"]),
            msd=float(row["msd"]),
            pearson=float(row["pearson"]),
            wall_time=0.0,
        )
        for row in rows
    ]
    timings: dict[tuple[str, float], list[float]] = {}
    timings_path = results_dir / "timings.csv"
    if timings_path.is_file():
        for row in _read_csv_dicts(timings_path):
            timings.setdefault((row["policy"], float(row["alpha"])), []).append(float(row["wall_ms"]))

    stats = _group_stats(results)
    policies = sorted({policy for policy, _ in stats})

    # Minimum-unfairness operating point per policy, with alignment there.
    best: dict[str, tuple[float, dict[str, float]]] = {}
    for policy in policies:
        candidates = [(alpha, s) for (p, alpha), s in stats.items() if p == policy]
        alpha_star, s_star = min(candidates, key=lambda kv: (kv[1]["unfairness_mean"], kv[0]))
        best[policy] = (alpha_star, s_star)

    lines = ["policy,alpha,unfairness_mean,unfairness_std,effectiveness_mean,wall_ms_mean"]
    for policy in sorted(best, key=lambda p: best[p][1]["unfairness_mean"]):
        alpha_star, s = best[policy]
        wall = timings.get((policy, alpha_star))
        wall_mean = sum(wall) / len(wall) if wall else math.nan
        lines.append(
            f"{policy},{format_float(alpha_star)},{format_float(s['unfairness_mean'])},"
            f"{format_float(s['unfairness_std'])},{format_float(s['effectiveness_mean'])},"
            f"{format_float(wall_mean)}"
        )
    (out / "report_min_unfairness.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["policy,alpha,msd_mean,pearson_mean"]
    for policy in policies:
        alpha_star, s = best[policy]
        lines.append(f"{policy},{format_float(alpha_star)},{format_float(s['msd_mean'])},{format_float(s['pearson_mean'])}")
    (out / "report_alignment.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    curves = {}
    for policy in policies:
        points = [
            (s["unfairness_mean"], s["effectiveness_mean"])
            for (p, _), s in sorted(stats.items())
            if p == policy and not math.isnan(s["unfairness_mean"])
        ]
        if points:
            curves[policy] = tradeoff_envelope(points)
    write_tradeoff_svg(out / "tradeoff.svg", curves)
    return out


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equityrank", description="Fairness-aware ranking experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a synthetic dataset directory")
    gen.add_argument("--config", help="JSON config with a 'generator' section")
    gen.add_argument("--out", required=True, help="dataset output directory")
    gen.add_argument("--scenario", choices=["common", "exp1st", "sale1st"], default=None)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--force", action="store_true", help="overwrite an existing non-empty directory")

    run = sub.add_parser("run", help="execute a single (policy, alpha, seed) run")
    run.add_argument("--config", help="JSON config (sim section applies)")
    run.add_argument("--dataset", required=True, help="dataset directory")
    run.add_argument("--policy", required=True, choices=list(POLICY_KINDS))
    run.add_argument("--alpha", type=float, default=0.0)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--mode", choices=["offline", "online"], default=None)
    run.add_argument("--steps", type=int, default=None, help="online steps override")
    run.add_argument("--out", default=None, help="optional output directory")

    sweep = sub.add_parser("sweep", help="run a full (policy x alpha x seed) sweep")
    sweep.add_argument("--config", help="JSON plan config")
    sweep.add_argument("--dataset", default=None, help="dataset directory (else generated from config)")
    sweep.add_argument("--out", default=None, help="output directory")
    sweep.add_argument("--scenario", choices=["common", "exp1st", "sale1st"], default=None)
    sweep.add_argument("--mode", choices=["offline", "online"], default=None)
    sweep.add_argument("--policy", default=None, help="restrict the sweep to one policy")
    sweep.add_argument("--alpha", type=float, default=None, help="restrict the sweep to one alpha")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--steps", type=int, default=None)
    sweep.add_argument("--workers", type=int, default=1)

    report = sub.add_parser("report", help="summarize sweep outputs into tables and an SVG")
    report.add_argument("--results", required=True, help="directory containing results.csv")
    report.add_argument("--out", default=None, help="report output directory (default: results dir)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            config = _load_config(args.config)
            gen_cfg = dict(config.get("generator", {}))
            if args.seed is not None:
                gen_cfg["seed"] = args.seed
            scenario_name = args.scenario or config.get("scenario", "common")
            out = cmd_generate(GeneratorSpec(**gen_cfg), ScenarioSpec.by_name(scenario_name), args.out, args.force)
            print(f"dataset written to {out}")
        elif args.command == "run":
            config = _load_config(args.config)
            sim = _build_sim(config, args)
            dataset = load_dataset(args.dataset)
            result = cmd_run(dataset, args.policy, args.alpha, args.seed, sim, args.out)
            print(RunResult.csv_header())
            print(result.csv_row())
        elif args.command == "sweep":
            plan = resolve_plan(args)
            out = cmd_sweep(plan)
            print(f"sweep outputs written to {out}")
        elif args.command == "report":
            out = cmd_report(args.results, args.out)
            print(f"report written to {out}")
        else:  # pragma: no cover - argparse enforces the choices
            parser.error(f"unknown command {args.command!r}")
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"status": "error", "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
