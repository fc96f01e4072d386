"""Operator entry point.

Non-interactive by design: every command reads flags and files, writes results
to stdout (JSON with --json), and exits nonzero on failure. run/simulate
refuse to overwrite an existing iteration's outputs unless --force is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agents import AgentBundle, RemoteJudge, RemoteSolver, RemoteTeacher
from .curriculum import CurriculumStore, load_seed_manifest
from .distill import GaussianUtility, LinearUtility
from .errors import EngineError
from .gateway import EndpointConfig, Gateway, RetryPolicy, make_handle
from .jsonio import canonical_dumps, read_jsonl
from .orchestrator import (
    RunConfig,
    dpo_path,
    filter_seed_candidates,
    load_latest_state,
    measure_validity_rate,
    run,
    state_path,
    validate_domain_distribution,
    wsft_path,
)
from .sim import SimScenario, SimSolver, SimTeacher, make_seed_problems


def _shared_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, default=None, help="agent/run config file (JSON)")
    sub.add_argument("--checkpoint-dir", type=Path, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--iterations", type=int, default=None)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--json", action="store_true", dest="as_json", help="machine-readable output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coevo", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("init", help="load a seed manifest and write checkpoint 0")
    p.add_argument("--seeds", type=Path, required=True, help="JSONL seed manifest")
    _shared_flags(p)
    p.set_defaults(func=cmd_init)

    p = subs.add_parser("run", help="run iterations against remote agents")
    _shared_flags(p)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_run)

    p = subs.add_parser("simulate", help="run iterations with simulated agents")
    _shared_flags(p)
    p.add_argument("--scenario", type=Path, default=None, help="simulation scenario JSON")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("emit-dpo", help="validate/summarize an emitted preference dataset")
    _shared_flags(p)
    p.add_argument("--iteration", type=int, required=True)
    p.add_argument("--out", type=Path, default=None, help="copy verified dataset here")
    p.set_defaults(func=cmd_emit_dpo)

    p = subs.add_parser("emit-wsft", help="validate/summarize an emitted weighted dataset")
    _shared_flags(p)
    p.add_argument("--iteration", type=int, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_emit_wsft)

    p = subs.add_parser("validate-seeds", help="check a manifest's band + subject distribution")
    p.add_argument("manifest", type=Path)
    _shared_flags(p)
    p.add_argument("--skill", type=float, default=1.2, help="simulated solver skill for banding")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--distribution-only", action="store_true")
    p.set_defaults(func=cmd_validate_seeds)

    p = subs.add_parser("validity-rate", help="fraction of problems a strong model solves")
    p.add_argument("manifest", type=Path)
    _shared_flags(p)
    p.set_defaults(func=cmd_validity_rate)

    p = subs.add_parser("stats", help="zone histogram and solve rate from a checkpoint")
    _shared_flags(p)
    p.set_defaults(func=cmd_stats)

    return parser


def _require(args, name: str):
    value = getattr(args, name.replace("-", "_"), None)
    if value is None:
        raise EngineError(f"--{name} is required for this command")
    return value


def _run_config(args, file_config: dict | None = None) -> RunConfig:
    section = dict((file_config or {}).get("run", {}))
    if "utility" in section:
        spec = section.pop("utility")
        if spec.get("family") == "linear":
            section["utility"] = LinearUtility(a=float(spec["a"]), b=float(spec["b"]))
        else:
            section["utility"] = GaussianUtility(
                mu=float(spec.get("mu", 0.5)), sigma=float(spec.get("sigma", 0.2))
            )
    if args.seed is not None:
        section["seed"] = args.seed
    if args.iterations is not None:
        section["iterations"] = args.iterations
    if args.workers is not None:
        section["workers"] = args.workers
    return RunConfig(**section)


def _load_config_file(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise EngineError(f"cannot read config {path}: {exc}") from exc


def _endpoint(spec: dict) -> EndpointConfig:
    retry = RetryPolicy(**spec.get("retry", {}))
    fields = {k: v for k, v in spec.items() if k != "retry"}
    return EndpointConfig(retry=retry, **fields)


def _handle_from(config: dict, role: str, required: bool = True):
    section = config.get(role)
    if section is None:
        if required:
            raise EngineError(f"config is missing the {role!r} section")
        return None
    endpoints = [_endpoint(spec) for spec in section.get("endpoints", [])]
    if not endpoints:
        raise EngineError(f"{role!r} section has no endpoints")
    return make_handle(role, endpoints, temperature=section.get("temperature"))


def _remote_agents(config: dict, gateway: Gateway) -> AgentBundle:
    solver = RemoteSolver(gateway, _handle_from(config, "solver"))
    teacher = RemoteTeacher(gateway, _handle_from(config, "teacher"))
    judge_handle = _handle_from(config, "judge", required=False)
    judge = RemoteJudge(gateway, judge_handle) if judge_handle else None
    return AgentBundle(solver=solver, teacher=teacher, judge=judge)


# -- commands -------------------------------------------------------------------


def cmd_init(args) -> dict:
    checkpoint_dir = Path(_require(args, "checkpoint-dir"))
    problems = load_seed_manifest(args.seeds)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    store = CurriculumStore(rng_seed=args.seed if args.seed is not None else 0)
    report = store.add_problems(problems, iteration=0)
    path = store.snapshot(state_path(checkpoint_dir, 0))
    return {
        "command": "init",
        "problems": report.inserted,
        "duplicates_skipped": len(problems) - report.inserted,
        "checkpoint": str(path),
    }


def cmd_run(args) -> dict:
    config_file = _load_config_file(Path(_require(args, "config")))
    checkpoint_dir = Path(_require(args, "checkpoint-dir"))
    run_config = _run_config(args, config_file)
    with Gateway() as gateway:
        agents = _remote_agents(config_file, gateway)
        reports = run(run_config, agents, checkpoint_dir, force=args.force)
    return {
        "command": "run",
        "iterations": [r.to_dict() for r in reports],
        "checkpoint_dir": str(checkpoint_dir),
    }


def cmd_simulate(args) -> dict:
    checkpoint_dir = Path(_require(args, "checkpoint-dir"))
    scenario = SimScenario.from_json(args.scenario) if args.scenario else SimScenario()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if overrides:
        scenario = SimScenario(**{**scenario.to_dict(), **overrides})
    run_config = RunConfig(
        seed=scenario.seed,
        iterations=scenario.iterations,
        workers=args.workers if args.workers is not None else 8,
    )
    agents = AgentBundle(solver=SimSolver(scenario), teacher=SimTeacher(scenario))
    seeds = make_seed_problems(scenario)
    reports = run(run_config, agents, checkpoint_dir, seed_problems=seeds, force=args.force)
    return {
        "command": "simulate",
        "scenario": scenario.to_dict(),
        "iterations": [r.to_dict() for r in reports],
        "checkpoint_dir": str(checkpoint_dir),
    }


def _summarize_dataset(path: Path, kind: str) -> dict:
    if not path.exists():
        raise EngineError(f"dataset {path} does not exist")
    records = read_jsonl(path)
    summary: dict = {"command": f"emit-{kind}", "path": str(path), "records": len(records)}
    if kind == "dpo":
        required = {"problem_id", "prompt", "chosen", "rejected", "winner_is_reference", "iteration"}
        summary["reference_winner_fraction"] = (
            sum(1 for r in records if r.get("winner_is_reference")) / len(records)
            if records
            else 0.0
        )
    else:
        required = {
            "prompt",
            "completion",
            "target_solution",
            "weight",
            "measured_success_rate",
            "stale",
            "iteration",
        }
        if records:
            weights = [float(r["weight"]) for r in records if "weight" in r]
            if weights:
                summary["weight_min"] = min(weights)
                summary["weight_max"] = max(weights)
    bad = [i for i, r in enumerate(records) if not required.issubset(r)]
    if bad:
        raise EngineError(f"{path}: {len(bad)} record(s) missing required keys (first at line {bad[0] + 1})")
    return summary


def cmd_emit_dpo(args) -> dict:
    checkpoint_dir = Path(_require(args, "checkpoint-dir"))
    path = dpo_path(checkpoint_dir, args.iteration)
    summary = _summarize_dataset(path, "dpo")
    if args.out:
        args.out.write_bytes(path.read_bytes())
        summary["out"] = str(args.out)
    return summary


def cmd_emit_wsft(args) -> dict:
    checkpoint_dir = Path(_require(args, "checkpoint-dir"))
    path = wsft_path(checkpoint_dir, args.iteration)
    summary = _summarize_dataset(path, "wsft")
    if args.out:
        args.out.write_bytes(path.read_bytes())
        summary["out"] = str(args.out)
    return summary


def cmd_validate_seeds(args) -> dict:
    problems = load_seed_manifest(args.manifest)
    distribution = validate_domain_distribution(problems)
    payload: dict = {
        "command": "validate-seeds",
        "manifest": str(args.manifest),
        "problems": len(problems),
        "distribution_ok": distribution.ok,
        "counts": distribution.counts,
        "expected": distribution.expected,
        "mismatches": {k: list(v) for k, v in distribution.mismatches().items()},
    }
    if not args.distribution_only:
        scenario = SimScenario(
            initial_skill=args.skill, seed=args.seed if args.seed is not None else 0
        )
        report = filter_seed_candidates(problems, SimSolver(scenario), k=args.k)
        payload["accepted"] = len(report.accepted)
        payload["rejected"] = report.reasons()
    if not distribution.ok:
        raise CommandFailed(payload, "seed manifest distribution mismatch")
    return payload


def cmd_validity_rate(args) -> dict:
    config_file = _load_config_file(Path(_require(args, "config")))
    problems = load_seed_manifest(args.manifest)
    with Gateway() as gateway:
        agents = _remote_agents(config_file, gateway)
        report = measure_validity_rate(problems, agents.teacher, judge=agents.judge)
    return {
        "command": "validity-rate",
        "problems": len(problems),
        "rate": report.rate,
        "transport_failures": report.transport_failures,
        "outcomes": dict(report.outcomes),
    }


def cmd_stats(args) -> dict:
    checkpoint_dir = Path(_require(args, "checkpoint-dir"))
    store = load_latest_state(checkpoint_dir)
    evaluated = [e for e in store.entries.values() if e.active and e.evaluated]
    mean_rate = sum(e.success_rate for e in evaluated) / len(evaluated) if evaluated else None
    return {
        "command": "stats",
        "iteration": store.iteration,
        "active_problems": len(store.active_ids()),
        "quarantined_problems": len(store.quarantined_ids()),
        "zone_histogram": store.zone_histogram(),
        "mean_success_rate": mean_rate,
        "transitions_logged": len(store.transition_log),
    }


class CommandFailed(EngineError):
    """Carries a structured payload for commands that fail with output."""

    def __init__(self, payload: dict, message: str):
        super().__init__(message)
        self.payload = payload


def _emit(payload: dict, as_json: bool, stream=None) -> None:
    stream = stream or sys.stdout
    if as_json:
        stream.write(canonical_dumps(payload) + "\n")
        return
    for key in sorted(payload):
        stream.write(f"{key}: {payload[key]}\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        payload = args.func(args)
    except CommandFailed as exc:
        _emit({**exc.payload, "error": str(exc)}, args.as_json, sys.stderr)
        return 1
    except EngineError as exc:
        _emit({"error": str(exc), "type": type(exc).__name__}, args.as_json, sys.stderr)
        return 1
    _emit(payload, args.as_json)
    return 0


if __name__ == "__main__":
    sys.exit(main())
