"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np
from scipy.io import wavfile

from . import harness, toy
from .errors import WorkerError
from .extern import external_reward_spec, spawn_worker
from .harness import (
    ExperimentPlan,
    build_guidance,
    calibrate_builtin_stats,
    derived_run_seed,
    emit_csv,
    emit_svg_plot,
    run_matrix,
)
from .rewards import built_in_rewards, calibrate_stats, stats_to_dict
from .schedule import make_schedule
from .search import SearchConfig, default_evo_steps, run_search
from .toy import build_default_task, task_fingerprint, task_to_json


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this tool reserves 2 for runtime
    failures and reports usage problems with 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _ints(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _seed_list(text: str) -> list[int]:
    """A bare integer N means seeds 0..N-1; a comma list is taken verbatim."""
    values = _ints(text)
    if "," not in text:
        if values[0] < 1:
            raise argparse.ArgumentTypeError("seed count must be at least 1")
        return list(range(values[0]))
    return values


def _scheme(text: str) -> str:
    if text in ("score", "rank", "rank_aggregation") or (
        text.startswith("single:") and len(text) > len("single:")
    ):
        return text
    raise argparse.ArgumentTypeError(
        f'bad scheme {text!r}; use "score", "rank", or "single:<reward>"'
    )


def _echo_config(name: str, payload: dict) -> None:
    record = {"command": name}
    record.update(payload)
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def _write_or_print(text: str, out: str | None) -> None:
    if out is None:
        print(text)
    else:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _search_kwargs(args) -> dict:
    return {
        "strategy": args.strategy,
        "scheme": args.scheme,
        "alpha": args.alpha[0] if isinstance(args.alpha, list) else args.alpha,
        "population": args.population,
        "evo_steps": args.evo_steps,
        "elite_count": args.elite_count,
        "mutation_scale": args.mutation_scale,
    }


def _add_task_args(p):
    p.add_argument("--task-seed", type=int, default=0, help="seed for the generation task")


def _add_search_args(p, population_list=False):
    p.add_argument(
        "--strategy",
        default="best_of_n",
        choices=("naive", "best_of_n", "evosearch"),
    )
    p.add_argument(
        "--scheme",
        type=_scheme,
        default="score",
        help='guidance rule: "single:<reward>", "score", or "rank"',
    )
    if population_list:
        p.add_argument("--population", type=_ints, default=[1, 2, 4, 8, 16])
    else:
        p.add_argument("--population", type=int, default=8)
    p.add_argument(
        "--evo-steps",
        type=_ints,
        default=None,
        metavar="T1,T2,...",
        help="evolution timesteps, strictly decreasing (default 74,50,25)",
    )
    p.add_argument("--elite-count", type=int, default=None)
    p.add_argument("--mutation-scale", type=float, default=0.2)
    p.add_argument("--worker", default=None, help="external reward worker command")
    p.add_argument("--samples", type=int, default=256, help="calibration sample count")
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> _Parser:
    parser = _Parser(prog="toneseek", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("task", parents=[], help="print or save the task definition")
    _add_task_args(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_task)

    p = sub.add_parser("calibrate", help="estimate reward mean and spread")
    _add_task_args(p)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--seed", type=int, default=None, help="calibration stream seed")
    p.add_argument("--worker", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("generate", help="run one search and save the winner")
    _add_task_args(p)
    _add_search_args(p)
    p.add_argument("--seed", type=int, default=0, help="master seed for this run")
    p.add_argument("--prompt", default=None, help="prompt id (default: first prompt)")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", default="sample", help="output prefix for .wav and .json")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sweep-alpha", help="trade-off across composite weights")
    _add_task_args(p)
    _add_search_args(p)
    p.add_argument("--alpha", type=_floats, default=[round(0.1 * i, 1) for i in range(11)])
    p.add_argument("--seeds", type=_seed_list, default=list(range(8)))
    p.add_argument("--out", default="alpha_sweep", help="output prefix")
    p.set_defaults(func=cmd_sweep_alpha)

    p = sub.add_parser("sweep-nfe", help="score against compute budget")
    _add_task_args(p)
    _add_search_args(p, population_list=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seeds", type=_seed_list, default=list(range(8)))
    p.add_argument("--unmatched", action="store_true", help="run evosearch at the raw population")
    p.add_argument("--out", default="nfe_sweep", help="output prefix")
    p.set_defaults(func=cmd_sweep_nfe)

    p = sub.add_parser("matrix", help="full strategy/scheme grid")
    _add_task_args(p)
    p.add_argument("--strategy", type=lambda s: s.split(","), default=["naive", "best_of_n", "evosearch"])
    p.add_argument("--scheme", type=lambda s: [_scheme(x) for x in s.split(",")], default=["score"])
    p.add_argument("--alpha", type=_floats, default=[0.5])
    p.add_argument("--population", type=_ints, default=[8])
    p.add_argument("--seeds", type=_seed_list, default=list(range(8)))
    p.add_argument("--evo-steps", type=_ints, default=None)
    p.add_argument("--elite-count", type=int, default=None)
    p.add_argument("--mutation-scale", type=float, default=0.2)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("report", help="score distributions for one configuration")
    _add_task_args(p)
    _add_search_args(p)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seeds", type=_seed_list, default=list(range(8)))
    p.add_argument("--plot", default=None, help="also write a box-plot SVG here")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def cmd_task(args) -> int:
    task = build_default_task(args.task_seed)
    _echo_config("task", {"task_seed": args.task_seed, "fingerprint": task_fingerprint(task)})
    _write_or_print(task_to_json(task), args.out)
    return 0


def cmd_calibrate(args) -> int:
    task = build_default_task(args.task_seed)
    sched = make_schedule()
    kwargs = {"num_samples": args.samples}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    _echo_config(
        "calibrate",
        {"task_seed": args.task_seed, "samples": args.samples, "worker": args.worker},
    )
    registry = built_in_rewards(task)
    handle = None
    try:
        if args.worker is not None:
            handle = spawn_worker(args.worker)
            spec = external_reward_spec(handle, task.decoder.sample_rate)
            registry[spec.name] = spec
        stats = {
            name: calibrate_stats(task, sched, spec, **kwargs) for name, spec in registry.items()
        }
    finally:
        if handle is not None:
            handle.close()
    payload = {
        "task_fingerprint": task_fingerprint(task),
        "samples": args.samples,
        "stats": {name: stats_to_dict(st) for name, st in stats.items()},
    }
    _write_or_print(json.dumps(payload, indent=2, sort_keys=True), args.out)
    return 0


def cmd_generate(args) -> int:
    task = build_default_task(args.task_seed)
    sched = make_schedule()
    prompt = task.prompt_by_id(args.prompt) if args.prompt is not None else task.prompts[0]
    registry = built_in_rewards(task)
    handle = None
    try:
        if args.worker is not None:
            handle = spawn_worker(args.worker)
            spec = external_reward_spec(handle, task.decoder.sample_rate)
            registry[spec.name] = spec
        stats = calibrate_builtin_stats(task, sched, args.samples)
        guidance = build_guidance(args.scheme, args.alpha, stats)
        cfg = SearchConfig(
            strategy=args.strategy,
            guidance=guidance,
            population=1 if args.strategy == "naive" else args.population,
            evo_steps=(
                tuple(args.evo_steps)
                if args.evo_steps is not None
                else (default_evo_steps(sched) if args.strategy == "evosearch" else ())
            ),
            elite_count=args.elite_count,
            mutation_scale=args.mutation_scale,
            master_seed=args.seed,
        )
        _echo_config(
            "generate",
            {"task_seed": args.task_seed, "seed": args.seed, "prompt": prompt.prompt_id}
            | _search_kwargs(args),
        )
        result = run_search(task, prompt, sched, cfg, registry)
    finally:
        if handle is not None:
            handle.close()
    wav_path = f"{args.out}.wav"
    json_path = f"{args.out}.json"
    wavfile.write(wav_path, task.decoder.sample_rate, result.selected_waveform.astype(np.float32))
    payload = {
        "prompt": prompt.prompt_id,
        "task_fingerprint": task_fingerprint(task),
        "strategy": cfg.strategy,
        "scheme": cfg.guidance.scheme,
        "population": cfg.population,
        "seed": result.seed,
        "selected_index": result.selected_index,
        "guidance_score": result.guidance_score,
        "scores": result.final_scores,
        "nfe": result.nfe,
        "wav": wav_path,
    }
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {wav_path} and {json_path}")
    return 0


def cmd_sweep_alpha(args) -> int:
    task = build_default_task(args.task_seed)
    sched = make_schedule()
    stats = calibrate_builtin_stats(task, sched, args.samples)
    _echo_config(
        "sweep-alpha",
        {"task_seed": args.task_seed, "seeds": args.seeds} | _search_kwargs(args),
    )
    table, selections = harness.sweep_alpha(
        task,
        sched,
        args.alpha,
        args.population,
        args.seeds,
        stats,
        strategy=args.strategy if args.strategy != "naive" else "best_of_n",
        evo_steps=tuple(args.evo_steps) if args.evo_steps is not None else None,
        elite_count=args.elite_count,
        mutation_scale=args.mutation_scale,
        jobs=args.jobs,
    )
    csv_path = f"{args.out}.csv"
    sel_path = f"{args.out}_selections.csv"
    svg_path = f"{args.out}.svg"
    emit_csv(table, csv_path)
    _write_selections(selections, sel_path)
    emit_svg_plot(table, "alpha_curve", svg_path)
    print(f"wrote {csv_path}, {sel_path}, {svg_path}")
    return 0


def _write_selections(selections: list[dict], path: str) -> None:
    import csv as _csv

    keys: list[str] = []
    for rec in selections:
        for k in rec:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = _csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(selections)


def cmd_sweep_nfe(args) -> int:
    task = build_default_task(args.task_seed)
    sched = make_schedule()
    stats = calibrate_builtin_stats(task, sched, args.samples)
    _echo_config(
        "sweep-nfe",
        {"task_seed": args.task_seed, "seeds": args.seeds, "matched": not args.unmatched}
        | _search_kwargs(args),
    )
    table = harness.sweep_nfe(
        task,
        sched,
        args.population,
        args.seeds,
        stats,
        alpha=args.alpha,
        evo_steps=tuple(args.evo_steps) if args.evo_steps is not None else None,
        elite_count=args.elite_count,
        mutation_scale=args.mutation_scale,
        matched=not args.unmatched,
        jobs=args.jobs,
    )
    csv_path = f"{args.out}.csv"
    svg_path = f"{args.out}.svg"
    emit_csv(table, csv_path)
    emit_svg_plot(table, "nfe_curve", svg_path)
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def cmd_matrix(args) -> int:
    plan = ExperimentPlan(
        strategies=tuple(args.strategy),
        schemes=tuple(args.scheme),
        alphas=tuple(args.alpha),
        populations=tuple(args.population),
        seeds=tuple(args.seeds),
        task_seed=args.task_seed,
        evo_steps=tuple(args.evo_steps) if args.evo_steps is not None else None,
        elite_count=args.elite_count,
        mutation_scale=args.mutation_scale,
        calibration_samples=args.samples,
        jobs=args.jobs,
    )
    _echo_config("matrix", {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(plan).items()})
    table = run_matrix(plan)
    if args.out is None:
        emit_csv(table, sys.stdout)
    else:
        emit_csv(table, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    task = build_default_task(args.task_seed)
    sched = make_schedule()
    stats = calibrate_builtin_stats(task, sched, args.samples)
    guidance = build_guidance(args.scheme, args.alpha, stats)
    cfg = SearchConfig(
        strategy=args.strategy,
        guidance=guidance,
        population=1 if args.strategy == "naive" else args.population,
        evo_steps=(
            tuple(args.evo_steps)
            if args.evo_steps is not None
            else (default_evo_steps(sched) if args.strategy == "evosearch" else ())
        ),
        elite_count=args.elite_count,
        mutation_scale=args.mutation_scale,
    )
    _echo_config(
        "report", {"task_seed": args.task_seed, "seeds": args.seeds} | _search_kwargs(args)
    )
    report = harness.distribution_report(task, sched, cfg, args.seeds, stats, jobs=args.jobs)
    if args.plot is not None:
        emit_svg_plot(report, "boxes", args.plot)
    _write_or_print(json.dumps(report, indent=2, sort_keys=True), args.out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except WorkerError as exc:
        print(f"toneseek: worker error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"toneseek: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
