"""Operator command line: precompute, benchmark, replay, serve.

Exit codes: 0 success, 2 precondition failure (bad inputs, missing library,
model mismatch), 3 verification mismatch (replay divergence).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .engine import MODELS, EpisodeLog, replay_log, run_benchmark, write_belief_traces
from .evidence import EvidenceConfig
from .optimizer import (
    DStarLibrary,
    OptimizerConfig,
    build_library,
    exhaustive_search,
    make_force_grid,
)
from .planner import plan
from .rewards import Scenario, load_scenario

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_MISMATCH = 3


def _load_scenario_or_fail(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: cannot load scenario {path}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_PRECONDITION)


def _default_library_path(scenario: Scenario, out: str | None) -> Path:
    return Path(out) if out else Path(f"{scenario.scenario_id}.dstar.json")


def cmd_precompute(args: argparse.Namespace) -> int:
    scenario = _load_scenario_or_fail(args.scenario)
    opt_cfg = OptimizerConfig(
        t_max=args.tmax,
        inner_iterations=args.inner_iterations,
        step_size=args.step_size,
        force_bound=scenario.hyperparameters.force_bound,
        seed=args.seed,
    )
    ev_cfg = EvidenceConfig.from_scenario(scenario)
    initial = plan(scenario.candidate_thetas[0], scenario).trajectory
    out_path = _default_library_path(scenario, args.out)

    t0 = time.perf_counter()
    library = build_library(
        scenario, args.kmax, opt_cfg, ev_cfg, initial, out_path=out_path, workers=args.workers
    )
    elapsed = time.perf_counter() - t0

    print(f"library: {out_path} ({len(library.entries)} entries, {elapsed:.1f}s)")
    print(f"{'candidate':>9} {'K':>3} {'D*':>12}  times/agents")
    for (sid, ti, k), e in sorted(library.entries.items()):
        slots = ", ".join(f"t{t}/a{a}" for t, a in zip(e.times, e.agents))
        print(f"{ti:>9} {k:>3} {e.dstar:>12.6f}  {slots}")

    if args.oracle:
        if scenario.horizon > 8 or scenario.num_agents > 1:
            print("error: --oracle needs a micro scenario (horizon <= 8, one agent)", file=sys.stderr)
            return EXIT_PRECONDITION
        grid = make_force_grid(-1.0, 1.0, 21)
        worst_gap = 0.0
        for ti in range(scenario.num_candidates):
            for k in range(1, min(args.kmax, 2) + 1):
                gmax, gmin, count = exhaustive_search(
                    initial,
                    scenario.candidate_thetas[ti],
                    k,
                    grid,
                    ev_cfg,
                    scenario,
                    force_bound=scenario.hyperparameters.force_bound,
                )
                stored = library.get(scenario.scenario_id, ti, k).dstar
                gap = abs(stored - gmax) / max(gmax - gmin, 1e-12)
                worst_gap = max(worst_gap, gap)
                print(
                    f"oracle candidate={ti} K={k}: exhaustive={gmax:.6f} over {count} sequences, "
                    f"stored={stored:.6f}, gap={100 * gap:.2f}% of range"
                )
        print(f"worst oracle gap: {100 * worst_gap:.2f}% of range")
        if worst_gap > 0.02:
            print("error: stored values deviate more than 2% of range", file=sys.stderr)
            return EXIT_MISMATCH
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    scenario = _load_scenario_or_fail(args.scenario)
    models = list(MODELS) if args.model == "all" else [args.model]
    library = None
    if "sequence" in models:
        lib_path = _default_library_path(scenario, args.library)
        if not lib_path.exists():
            print(
                f"error: no evidence library at {lib_path}; run "
                f"`corrlearn precompute --scenario {args.scenario} --kmax 6 --out {lib_path}` first",
                file=sys.stderr,
            )
            return EXIT_PRECONDITION
        library = DStarLibrary.load(lib_path)

    out_dir = Path(args.out) if args.out else Path("benchmark_out")
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.episodes == 0:
        summary = {
            "scenario_id": scenario.scenario_id,
            "episodes_per_sigma": 0,
            "sigmas": args.sigma,
            "seed": args.seed,
            "models": {},
        }
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        print("no episodes requested; empty report written")
        return EXIT_OK

    result = run_benchmark(
        scenario, models, args.episodes, args.sigma, args.seed, library, workers=args.workers
    )
    (out_dir / "summary.json").write_text(
        json.dumps(result.summary, indent=2, sort_keys=True) + "\n"
    )
    with open(out_dir / "belief_traces.csv", "w") as f:
        write_belief_traces(result.logs, f)
    logs_dir = out_dir / "logs"
    logs_dir.mkdir(exist_ok=True)
    for i, log in enumerate(result.logs):
        log.save(logs_dir / f"episode_{i:04d}.jsonl")

    print(f"scenario {scenario.scenario_id}: {args.episodes} episodes/sigma, sigmas={args.sigma}")
    for model, r in result.summary["models"].items():
        mean = r["accuracy_mean"]
        std = r["accuracy_std"]
        print(f"  {model:12s} accuracy {mean:.3f} +/- {std:.3f} over {r['episodes']} episodes")
    print(f"outputs in {out_dir}/ (summary.json, belief_traces.csv, logs/)")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        log = EpisodeLog.load(args.log)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: cannot load episode log {args.log}: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    if args.model is not None and args.model != log.model:
        print(
            f"error: log was recorded under model {log.model!r}, refusing to replay as {args.model!r}",
            file=sys.stderr,
        )
        return EXIT_PRECONDITION
    library = None
    if log.model == "sequence":
        if args.library is None:
            print("error: sequence-model replay needs --library", file=sys.stderr)
            return EXIT_PRECONDITION
        library = DStarLibrary.load(args.library)
    ok, detail = replay_log(log, library)
    if ok:
        print(f"replay OK: {args.log} ({len(log.events)} events)")
        return EXIT_OK
    print(f"replay MISMATCH: {detail}", file=sys.stderr)
    return EXIT_MISMATCH


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(scenario_dir=args.scenario_dir, library_dir=args.library_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrlearn",
        description="Reward learning from correction sequences: offline precompute, benchmarks, replay, live service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("precompute", help="solve and store maximum-evidence entries")
    p.add_argument("--scenario", required=True)
    p.add_argument("--kmax", type=int, default=6)
    p.add_argument("--tmax", type=int, default=200)
    p.add_argument("--inner-iterations", type=int, default=300)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--oracle", action="store_true", help="compare against exhaustive grid search")
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("benchmark", help="run simulated-corrector episodes and report accuracy")
    p.add_argument("--scenario", required=True)
    p.add_argument("--model", choices=[*MODELS, "all"], default="all")
    p.add_argument("--episodes", type=int, default=17)
    p.add_argument("--sigma", type=float, nargs="+", default=[0.0, 0.1, 0.3])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--library", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("replay", help="re-execute a logged episode and verify belief traces")
    p.add_argument("--log", required=True)
    p.add_argument("--model", default=None, help="refuse unless it matches the log")
    p.add_argument("--library", default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the live correction session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--scenario-dir", default=None)
    p.add_argument("--library-dir", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
