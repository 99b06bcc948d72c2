"""Experiment orchestration: config files, replicated adaptive runs,
persisted sample histories and error curves, and summary reporting."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import controller, problems
from .controller import ClassRule, MivorConfig, mivor_step, pool_size
from .design import mc_pool
from .errors import ContractViolationError, MivorError
from .kriging import NuggetPolicy, SwarmConfig
from .problems import (
    BUILTIN_PROBLEMS,
    ParameterDomain,
    Problem,
    ReferenceSet,
    accuracy,
    build_reference,
    external_problem,
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved settings of one replicated experiment."""

    problem: str = "higdon"                       # builtin name, or "external"
    command: tuple[str, ...] = ()                 # external program argv
    lower: tuple[float, ...] = ()                 # external domain bounds
    upper: tuple[float, ...] = ()
    limit: float = 0.0
    n_initial: int = 5
    n_total: int = 35
    r0: float = 0.4
    alpha: float = 1.1
    n_mc: int = 0                                 # 0 = automatic (100 * n * m)
    swarm: SwarmConfig = SwarmConfig()
    replications: int = 1
    base_seed: int = 0
    checkpoints: tuple[int, ...] = ()             # empty = every 5 added samples
    reference_density: int = 5000
    reference_file: str = ""
    workers: int = 1
    out: str = "results"

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ContractViolationError("need at least one replication")
        if self.workers < 1:
            raise ContractViolationError("need at least one worker")
        bad = [m for m in self.checkpoints if not self.n_initial <= m <= self.n_total]
        if bad:
            raise ContractViolationError(f"checkpoints outside [n_initial, n_total]: {bad}")

    def make_problem(self) -> Problem:
        if self.problem == "external":
            if not self.command or not self.lower:
                raise ContractViolationError("external problems need a command and domain bounds")
            return external_problem(self.command, self.lower, self.upper)
        try:
            return BUILTIN_PROBLEMS[self.problem]()
        except KeyError:
            raise ContractViolationError(
                f"unknown problem {self.problem!r}; built-ins: {sorted(BUILTIN_PROBLEMS)}"
            ) from None

    def mivor_config(self, seed: int) -> MivorConfig:
        return MivorConfig(
            n_initial=self.n_initial,
            n_total=self.n_total,
            r0=self.r0,
            alpha=self.alpha,
            n_mc=self.n_mc or None,
            swarm=self.swarm,
            base_seed=seed,
        )

    def resolved_checkpoints(self) -> tuple[int, ...]:
        if self.checkpoints:
            return tuple(sorted(set(self.checkpoints)))
        marks = set(range(self.n_initial, self.n_total + 1, 5))
        marks.add(self.n_total)
        return tuple(sorted(marks))


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from a TOML file plus flag overrides."""
    raw: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    prob = raw.get("problem", {})
    adaptive = raw.get("adaptive", {})
    swarm_raw = raw.get("swarm", {})
    exp = raw.get("experiment", {})

    swarm = SwarmConfig(
        particles=int(swarm_raw.get("particles", 20)),
        iterations=int(swarm_raw.get("iterations", 40)),
        inertia=float(swarm_raw.get("inertia", 0.7)),
        cognitive=float(swarm_raw.get("cognitive", 1.5)),
        social=float(swarm_raw.get("social", 1.5)),
        log10_length_bounds=(
            float(swarm_raw.get("log10_length_min", -3.0)),
            float(swarm_raw.get("log10_length_max", 2.0)),
        ),
        refine_steps=int(swarm_raw.get("refine_steps", 80)),
    )
    values = dict(
        problem=str(prob.get("name", "higdon")),
        command=tuple(prob.get("command", ())),
        lower=tuple(float(v) for v in prob.get("lower", ())),
        upper=tuple(float(v) for v in prob.get("upper", ())),
        limit=float(prob.get("limit", 0.0)),
        n_initial=int(adaptive.get("n_initial", 5)),
        n_total=int(adaptive.get("n_total", 35)),
        r0=float(adaptive.get("r0", 0.4)),
        alpha=float(adaptive.get("alpha", 1.1)),
        n_mc=int(adaptive.get("n_mc", 0)),
        swarm=swarm,
        replications=int(exp.get("replications", 1)),
        base_seed=int(exp.get("base_seed", 0)),
        checkpoints=tuple(int(m) for m in exp.get("checkpoints", ())),
        reference_density=int(exp.get("reference_density", 5000)),
        reference_file=str(exp.get("reference_file", "")),
        workers=int(exp.get("workers", 1)),
        out=str(exp.get("out", "results")),
    )
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# replication execution
# ---------------------------------------------------------------------------

def run_replication(
    cfg: ExperimentConfig, replication: int, reference: ReferenceSet
) -> dict:
    """One seeded adaptive run with accuracy evaluated at every checkpoint."""
    problem = cfg.make_problem()
    rule = ClassRule(cfg.limit)
    seed = cfg.base_seed + replication
    mivor_cfg = cfg.mivor_config(seed)
    checkpoints = set(cfg.resolved_checkpoints())

    error_rows = []
    state = controller.initialize(problem, rule, mivor_cfg)
    if state.dataset.m in checkpoints:
        report = accuracy(state.model, reference, rule)
        error_rows.append((state.dataset.m, report.ap_c1, report.ap_c2))
    n = problem.dimension
    while state.dataset.m < mivor_cfg.n_total:
        pool = mc_pool(pool_size(mivor_cfg, n, state.dataset.m), n, state.rng)
        mivor_step(state, pool, problem.evaluate_normalized)
        if state.dataset.m in checkpoints:
            report = accuracy(state.model, reference, rule)
            error_rows.append((state.dataset.m, report.ap_c1, report.ap_c2))

    sample_rows = [
        (rec.iteration, rec.kind, problems.denormalize(rec.point, problem.domain), rec.value, rec.r_after)
        for rec in state.step_log
    ]
    return {
        "replication": replication,
        "seed": seed,
        "samples": sample_rows,
        "errors": error_rows,
        "status": "ok",
    }


def _replication_worker(args: tuple) -> dict:
    cfg, replication, reference = args
    try:
        return run_replication(cfg, replication, reference)
    except Exception as exc:  # failures are recorded, the experiment continues
        return {
            "replication": replication,
            "seed": cfg.base_seed + replication,
            "samples": [],
            "errors": [],
            "status": f"failed: {exc}",
        }


def _load_reference(cfg: ExperimentConfig, problem: Problem, rule: ClassRule) -> ReferenceSet:
    if cfg.reference_file:
        return read_reference_csv(cfg.reference_file, problem.domain)
    return build_reference(problem, rule, cfg.reference_density)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute all replications and write the experiment artifacts.

    Returns the summary dictionary (also written to summary.json).  Output
    files: samples.csv, errors.csv, summary.json, resolved_config.json and,
    for the drop-wave problem, the calibrated domain in the summary metadata.
    """
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    problem = cfg.make_problem()
    rule = ClassRule(cfg.limit)
    reference = _load_reference(cfg, problem, rule)

    jobs = [(cfg, rep, reference) for rep in range(cfg.replications)]
    if cfg.workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_replication_worker, jobs))
    else:
        results = [_replication_worker(job) for job in jobs]
    results.sort(key=lambda res: res["replication"])

    n = problem.dimension
    with open(outdir / "samples.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replication", "iteration", "step_kind"]
                        + [f"x_{i + 1}" for i in range(n)] + ["y", "r_after"])
        for res in results:
            for iteration, kind, point, value, r_after in res["samples"]:
                writer.writerow([res["replication"], iteration, kind]
                                + [repr(float(v)) for v in point]
                                + [repr(float(value)), repr(float(r_after))])

    with open(outdir / "errors.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replication", "checkpoint_m", "ap_c1", "ap_c2"])
        for res in results:
            for m, ap_c1, ap_c2 in res["errors"]:
                writer.writerow([res["replication"], m, repr(float(ap_c1)), repr(float(ap_c2))])

    summary = summarize(cfg, problem, results)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(outdir / "resolved_config.json", "w") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def summarize(cfg: ExperimentConfig, problem: Problem, results: list[dict]) -> dict:
    per_checkpoint: dict[int, list[tuple[float, float]]] = {}
    for res in results:
        if res["status"] != "ok":
            continue
        for m, ap_c1, ap_c2 in res["errors"]:
            per_checkpoint.setdefault(m, []).append((ap_c1, ap_c2))
    checkpoints = []
    for m in sorted(per_checkpoint):
        c1 = [v[0] for v in per_checkpoint[m]]
        c2 = [v[1] for v in per_checkpoint[m]]
        checkpoints.append({
            "m": m,
            "ap_c1": {"mean": float(np.mean(c1)), "min": min(c1), "max": max(c1)},
            "ap_c2": {"mean": float(np.mean(c2)), "min": min(c2), "max": max(c2)},
        })
    return {
        "problem": problem.name,
        "limit": cfg.limit,
        "replications": cfg.replications,
        "seeds": [res["seed"] for res in results],
        "failed": {str(res["replication"]): res["status"]
                   for res in results if res["status"] != "ok"},
        "checkpoints": checkpoints,
        "metadata": {
            "domain_lower": problem.domain.lower.tolist(),
            "domain_upper": problem.domain.upper.tolist(),
            "n_initial": cfg.n_initial,
            "n_total": cfg.n_total,
            "r0": cfg.r0,
            "alpha": cfg.alpha,
        },
    }


# ---------------------------------------------------------------------------
# reference caching
# ---------------------------------------------------------------------------

def write_reference_csv(reference: ReferenceSet, path: str | Path) -> None:
    n = reference.domain.dimension
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{i + 1}" for i in range(n)] + ["y", "label"])
        for point, value, label in zip(reference.points, reference.values, reference.labels):
            writer.writerow([repr(float(v)) for v in point]
                            + [repr(float(value)), "C1" if label else "C2"])


def read_reference_csv(path: str | Path, domain: ParameterDomain) -> ReferenceSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows) < 2:
        raise ContractViolationError(f"reference file {path} is empty")
    n = domain.dimension
    if rows[0][:n] != [f"x_{i + 1}" for i in range(n)]:
        raise ContractViolationError(f"reference file {path} does not match the problem dimension")
    body = rows[1:]
    points = np.array([[float(v) for v in row[:n]] for row in body])
    values = np.array([float(row[n]) for row in body])
    labels = np.array([row[n + 1] == "C1" for row in body])
    return ReferenceSet(points, values, labels, domain)


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def report(paths: list[str | Path], curves_path: str | Path | None = None) -> list[dict]:
    """Tabulate one or more summaries; rows are (label, checkpoint, statistic)."""
    labels = [Path(p).parent.name or Path(p).stem for p in paths]
    if len(set(labels)) != len(labels):  # same directory names: disambiguate
        labels = [str(Path(p).parent) for p in paths]
    rows = []
    for label, path in zip(labels, paths):
        try:
            with open(path) as fh:
                summary = json.load(fh)
            checkpoints = summary["checkpoints"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise MivorError(f"cannot read summary {path}: {exc}") from exc
        for entry in checkpoints:
            for stat in ("mean", "min", "max"):
                rows.append({
                    "label": label,
                    "checkpoint_m": entry["m"],
                    "statistic": stat,
                    "ap_c1": entry["ap_c1"][stat],
                    "ap_c2": entry["ap_c2"][stat],
                })
    rows.sort(key=lambda r: (r["checkpoint_m"], r["label"], r["statistic"]))
    if curves_path is not None:
        with open(curves_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "checkpoint_m", "statistic", "ap_c1", "ap_c2"])
            for row in rows:
                writer.writerow([row["label"], row["checkpoint_m"], row["statistic"],
                                 repr(float(row["ap_c1"])), repr(float(row["ap_c2"]))])
    return rows


def _print_report(rows: list[dict]) -> None:
    header = f"{'label':<20} {'m':>5} {'stat':>5} {'ap_c1':>10} {'ap_c2':>10}"
    print(header)
    print("-" * len(header))
    for row in rows:
        print(f"{row['label']:<20} {row['checkpoint_m']:>5} {row['statistic']:>5} "
              f"{row['ap_c1']:>10.4f} {row['ap_c2']:>10.4f}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="mivor", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run a replicated adaptive experiment")
    p_run.add_argument("--config", help="TOML config file")
    p_run.add_argument("--problem", help="built-in problem name")
    p_run.add_argument("--limit", type=float, help="classification limit")
    p_run.add_argument("--seed", type=int, help="base seed")
    p_run.add_argument("--replications", type=int)
    p_run.add_argument("--out", help="output directory")

    p_ref = sub.add_parser("reference", help="build and cache a reference set")
    p_ref.add_argument("--config", help="TOML config file")
    p_ref.add_argument("--problem", help="built-in problem name")
    p_ref.add_argument("--limit", type=float)
    p_ref.add_argument("--out", required=True, help="reference CSV path")

    p_rep = sub.add_parser("report", help="tabulate summary files")
    p_rep.add_argument("summaries", nargs="+", help="summary.json files")
    p_rep.add_argument("--out", help="plot-ready curves CSV path")

    args = parser.parse_args(argv)

    if args.cmd == "run":
        cfg = load_config(args.config, {
            "problem": args.problem,
            "limit": args.limit,
            "base_seed": args.seed,
            "replications": args.replications,
            "out": args.out,
        })
        summary = run_experiment(cfg)
        failed = summary["failed"]
        print(f"{cfg.replications} replication(s) -> {cfg.out} "
              f"({len(failed)} failed)" if failed else
              f"{cfg.replications} replication(s) -> {cfg.out}")
        return 1 if failed else 0

    if args.cmd == "reference":
        cfg = load_config(args.config, {"problem": args.problem, "limit": args.limit})
        reference = build_reference(cfg.make_problem(), ClassRule(cfg.limit), cfg.reference_density)
        write_reference_csv(reference, args.out)
        c1, c2 = reference.counts
        print(f"{reference.labels.size} reference points ({c1} C1, {c2} C2) -> {args.out}")
        return 0

    if args.cmd == "report":
        rows = report(args.summaries, args.out)
        _print_report(rows)
        return 0

    return 2  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
