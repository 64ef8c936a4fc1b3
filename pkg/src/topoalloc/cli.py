"""Command line driver: ``topoalloc {train,simulate,verify,gen-workload}``.

Exit codes: 0 ok, 1 usage, 2 runtime failure, 3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import asdict
from importlib import metadata
from pathlib import Path

import numpy as np
import torch

from . import verify
from .config import ExperimentConfig, load_config
from .errors import ConfigError, PolicyFileError
from .neural.io import load_policy, save_policy
from .neural.networks import PolicyNetwork
from .neural.ppo import TrainingDiverged, train_ppo
from .simulator import SchedulerKind, run_epochs
from .workload import WorkloadSpec, generate_workload, save_workload

log = logging.getLogger("topoalloc")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


# ---------------------------------------------------------------- outputs

def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return v


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"topoalloc": pkg, "python": platform.python_version(),
            "numpy": np.__version__, "torch": torch.__version__}


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, artifacts: list[str]) -> None:
    manifest = {
        "command": command,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "versions": _versions(),
        "artifacts": sorted(artifacts),
        "config": cfg.to_dict(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands

def cmd_train(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    ppo = cfg.ppo_config()
    dist = cfg.instance_distribution()
    torch.manual_seed(cfg.seed)
    net = PolicyNetwork(cfg.training.arch)
    prior = 0
    if cfg.training.init_policy:
        # warm start: continue from an earlier run's weights
        start, start_meta = load_policy(cfg.training.init_policy)
        if start.arch != net.arch:
            raise ConfigError(f"init_policy is {start.arch}, training.arch is {net.arch}")
        net.load_state_dict(start.state_dict())
        prior = int(start_meta.get("updates", 0))

    def progress(row):
        if cfg.output.verbosity > 0:
            print(f"update {row['update']}: reward {row['mean_reward']:.5f} "
                  f"cost {row['mean_cost']:.1f}", file=sys.stderr)

    started = time.perf_counter()
    net, curve = train_ppo(net, ppo, dist, progress)
    elapsed = time.perf_counter() - started
    save_policy(net, out / "policy.bin", {"n_max": dist.n_max, "updates": prior + ppo.updates,
                                          "config_hash": cfg.digest()})
    write_csv(out / "learning_curve.csv", ["update", "mean_reward", "mean_cost"],
              ([r["update"], r["mean_reward"], r["mean_cost"]] for r in curve))
    (out / "train_metrics.json").write_text(json.dumps(
        {"updates": len(curve), "seconds": elapsed,
         "final_mean_cost": curve[-1]["mean_cost"] if curve else None}, indent=2) + "\n")
    write_manifest(out, "train", cfg, ["policy.bin", "learning_curve.csv", "train_metrics.json"])
    return EXIT_OK


def _needs_policy(cfg: ExperimentConfig) -> bool:
    return (cfg.solver.scheduler == SchedulerKind.WINDOW_NSA.value
            or any(name.startswith("nsa") for name in cfg.solver.compare))


def improvement(baseline: float, candidate: float) -> float:
    """Relative improvement of ``candidate`` over ``baseline``."""
    return (baseline - candidate) / baseline if baseline else 0.0


def cmd_simulate(cfg: ExperimentConfig) -> int:
    sim = cfg.simulation_config()
    policy = None
    if _needs_policy(cfg):
        if not cfg.solver.policy:
            raise ConfigError("an nsa solver needs solver.policy")
        policy, meta = load_policy(cfg.solver.policy)
        if sim.n_max is None:
            sim.n_max = meta.get("n_max")
    out = _outdir(cfg)
    result = run_epochs(sim, policy)

    solvers = sorted({name for m in result.epochs for name in m.instance_costs})
    base = cfg.solver.improvement_baseline
    if base is not None and base not in solvers:
        raise ConfigError(f"improvement baseline {base!r} is not among the compared solvers")
    header = ["epoch", "jobs", "instances", "avg_ch_cost", "avg_waiting_time", "cancel_rate"]
    header += [f"cost_{s}" for s in solvers]
    if base is not None:
        header.append("impr")
    rows = []
    for m in result.epochs:
        row = [m.epoch, m.jobs, m.instances, m.avg_ch_cost, m.avg_waiting_time, m.cancel_rate]
        row += [m.instance_costs.get(s, 0.0) for s in solvers]
        if base is not None:
            row.append(improvement(m.instance_costs[base], m.instance_costs["reference"]))
        rows.append(row)
    write_csv(out / "epochs.csv", header, rows)
    write_csv(out / "allocations.csv",
              ["epoch", "clock", "job_id", "nodes", "cost", "wait", "nwp"],
              (list(a) for a in result.allocations))
    write_csv(out / "instances.csv",
              ["epoch", "instance", "clock", "jobs", "idle", "solver", "cost"],
              (list(r)[:-1] for r in result.instances))
    # wall-clock timings vary run to run, so they stay out of the CSV files
    metrics = {"epochs": [asdict(m) for m in result.epochs],
               "instance_seconds": [[r.epoch, r.instance, r.solver, r.seconds]
                                    for r in result.instances]}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=1) + "\n")
    write_manifest(out, "simulate", cfg,
                   ["epochs.csv", "allocations.csv", "instances.csv", "metrics.json"])
    if cfg.output.verbosity > 0:
        for row in rows:
            print(" ".join(str(_cell(v)) for v in row))
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, policy: str | None, exact_count: int) -> int:
    policy = policy or cfg.solver.policy
    ok = verify.run_suite(verify.suite(policy, exact_count))
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_gen_workload(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    spec = cfg.workload_spec()
    names = []
    for e in range(max(cfg.simulation.epochs, 1)):
        jobs = generate_workload(WorkloadSpec(**{**spec.__dict__, "seed": spec.seed + e}))
        name = f"workload_{e:03d}.jsonl"
        save_workload(jobs, out / name)
        names.append(name)
    write_manifest(out, "gen-workload", cfg, names)
    return EXIT_OK


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="topoalloc", description="Topology-aware job allocation experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("train", "train a repair policy"),
                       ("simulate", "run scheduling epochs"),
                       ("verify", "run the oracle suite"),
                       ("gen-workload", "write seeded workload files")):
        s = sub.add_parser(name, help=text)
        s.add_argument("-c", "--config", help="YAML config file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. solver.tau=30")
        s.add_argument("-o", "--out", help="output directory (overrides output.dir)")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            s.add_argument("--policy", help="policy file to integrity-check")
            s.add_argument("--exact-count", type=int, default=200,
                           help="random instances for the exact-solver check")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.set)
    if args.out:
        overrides.append(f"output.dir={args.out}")
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.policy, args.exact_count)
        return cmd_gen_workload(cfg)
    except ConfigError as exc:
        print(f"topoalloc: config error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (PolicyFileError, TrainingDiverged, OSError, RuntimeError, ValueError) as exc:
        print(f"topoalloc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
