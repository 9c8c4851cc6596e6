"""Experiment harness: run search configurations across seeds and prompts,
aggregate reward statistics, and emit CSV tables and SVG plots."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import toy
from .rewards import (
    DEFAULT_CALIBRATION_SEED,
    DEFAULT_CALIBRATION_SIZE,
    GuidanceConfig,
    RewardStats,
    alpha_score_config,
    apply_scheme,
    built_in_rewards,
    calibrate_stats,
    reward_matrix,
)
from .schedule import Schedule, make_schedule
from .search import (
    DEFAULT_MUTATION_SCALE,
    SearchConfig,
    default_evo_steps,
    expected_nfe,
    matched_evo_population,
    run_search,
)
from .toy import Task

CSV_HEADER = (
    "strategy,scheme,alpha,population,nfe,reward_name,raw_mean,raw_std,"
    "z_mean,z_std,guidance_mean,guidance_std,seeds"
)


def derived_run_seed(seed: int, prompt_index: int) -> int:
    """Independent master seed for one (experiment seed, prompt) pair.

    Reusing the bare experiment seed across prompts would replay the same
    noise draws for every prompt; mixing the prompt index in through a seed
    sequence keeps the four runs of one seed statistically independent.
    """
    return int(np.random.SeedSequence(entropy=[seed, prompt_index]).generate_state(1)[0])


@dataclass(frozen=True)
class SeedOutcome:
    """Prompt-averaged scores for one experiment seed."""

    seed: int
    raw: dict
    guidance: float
    nfe: int


@dataclass(frozen=True)
class RunRow:
    """One aggregated table row: a (configuration, reward) pair."""

    strategy: str
    scheme: str
    alpha: float | None
    population: int
    nfe: int
    reward_name: str
    raw_mean: float
    raw_std: float
    z_mean: float
    z_std: float
    guidance_mean: float
    guidance_std: float
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class MetricTable:
    rows: tuple[RunRow, ...]

    def filter(self, **kv) -> "MetricTable":
        rows = [r for r in self.rows if all(getattr(r, k) == v for k, v in kv.items())]
        return MetricTable(rows=tuple(rows))


@dataclass(frozen=True)
class ExperimentPlan:
    """Grid of configurations for run_matrix.

    Args:
        strategies: subset of {"naive", "best_of_n", "evosearch"}.
        schemes: guidance labels; "single:<reward>", "score", or "rank".
        alphas: composite weights, used by "score" rows only.
        populations: candidate counts for the search strategies.
        seeds: experiment seeds; each is averaged over all task prompts.
        task_seed: seed for build_default_task.
        evo_steps: evolution timesteps; None picks the schedule defaults.
        elite_count: survivors per evolution step; None means ceil(N / 4).
        mutation_scale: sigma for elite mutation.
        calibration_samples: reverse-process sample count for reward stats.
        jobs: worker threads across seeds.
    """

    strategies: tuple[str, ...] = ("naive", "best_of_n", "evosearch")
    schemes: tuple[str, ...] = ("score",)
    alphas: tuple[float, ...] = (0.5,)
    populations: tuple[int, ...] = (8,)
    seeds: tuple[int, ...] = tuple(range(8))
    task_seed: int = 0
    evo_steps: tuple[int, ...] | None = None
    elite_count: int | None = None
    mutation_scale: float = DEFAULT_MUTATION_SCALE
    calibration_samples: int = DEFAULT_CALIBRATION_SIZE
    jobs: int = 1


def build_guidance(scheme: str, alpha: float | None, stats: dict[str, RewardStats]) -> GuidanceConfig:
    """Guidance config from a scheme label.

    "single:<reward>" selects on one raw reward, "rank" on summed ranks over
    alignment and quality, "score" on the alpha-weighted z composite.
    """
    if scheme.startswith("single:"):
        return GuidanceConfig(scheme="single", rewards=(scheme.split(":", 1)[1],))
    if scheme in ("rank", "rank_aggregation"):
        return GuidanceConfig(scheme="rank_aggregation", rewards=("alignment", "quality"))
    if scheme == "score":
        if alpha is None:
            raise ValueError("score scheme needs an alpha")
        return alpha_score_config(alpha, stats["alignment"], stats["quality"])
    raise ValueError(f"unknown scheme label {scheme!r}")


def calibrate_builtin_stats(
    task: Task,
    sched: Schedule,
    num_samples: int = DEFAULT_CALIBRATION_SIZE,
    seed: int = DEFAULT_CALIBRATION_SEED,
) -> dict[str, RewardStats]:
    registry = built_in_rewards(task)
    return {
        name: calibrate_stats(task, sched, spec, num_samples=num_samples, seed=seed)
        for name, spec in registry.items()
    }


def run_config_over_seeds(
    task: Task,
    sched: Schedule,
    cfg: SearchConfig,
    seeds,
    registry=None,
    jobs: int = 1,
) -> list[SeedOutcome]:
    """Run one configuration for every seed, averaging scores over prompts."""
    registry = registry if registry is not None else built_in_rewards(task)

    def one(seed: int) -> SeedOutcome:
        sums: dict[str, float] = {}
        guidance_sum = 0.0
        nfe = 0
        for pi, prompt in enumerate(task.prompts):
            rcfg = replace(cfg, master_seed=derived_run_seed(seed, pi))
            res = run_search(task, prompt, sched, rcfg, registry)
            for name, value in res.final_scores["raw"].items():
                sums[name] = sums.get(name, 0.0) + value
            guidance_sum += res.guidance_score
            nfe = res.nfe
        k = len(task.prompts)
        return SeedOutcome(
            seed=seed,
            raw={name: s / k for name, s in sums.items()},
            guidance=guidance_sum / k,
            nfe=nfe,
        )

    seeds = list(seeds)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, seeds))
    return [one(s) for s in seeds]


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1))


def aggregate_rows(
    strategy: str,
    scheme: str,
    alpha: float | None,
    population: int,
    outcomes: list[SeedOutcome],
    stats: dict[str, RewardStats],
) -> list[RunRow]:
    """One row per reward observed in the outcomes; z columns are NaN for
    rewards without calibration stats."""
    if not outcomes:
        raise ValueError("no outcomes to aggregate")
    nfes = {o.nfe for o in outcomes}
    if len(nfes) != 1:
        raise ValueError(f"outcomes disagree on nfe: {sorted(nfes)}")
    nfe = nfes.pop()
    seeds = tuple(o.seed for o in outcomes)
    g_mean, g_std = _mean_std([o.guidance for o in outcomes])
    rows = []
    for name in outcomes[0].raw:
        raw_vals = [o.raw[name] for o in outcomes]
        raw_mean, raw_std = _mean_std(raw_vals)
        if name in stats:
            st = stats[name]
            z_vals = [(v - st.mu) / st.sigma for v in raw_vals]
            z_mean, z_std = _mean_std(z_vals)
        else:
            z_mean = z_std = float("nan")
        rows.append(
            RunRow(
                strategy=strategy,
                scheme=scheme,
                alpha=alpha,
                population=population,
                nfe=nfe,
                reward_name=name,
                raw_mean=raw_mean,
                raw_std=raw_std,
                z_mean=z_mean,
                z_std=z_std,
                guidance_mean=g_mean,
                guidance_std=g_std,
                seeds=seeds,
            )
        )
    return rows


def _make_config(
    strategy: str,
    guidance: GuidanceConfig,
    population: int,
    sched: Schedule,
    evo_steps: tuple[int, ...] | None,
    elite_count: int | None,
    mutation_scale: float,
) -> SearchConfig:
    if strategy == "naive":
        return SearchConfig(strategy="naive", guidance=guidance, population=1)
    if strategy == "best_of_n":
        return SearchConfig(strategy="best_of_n", guidance=guidance, population=population)
    steps = tuple(evo_steps) if evo_steps is not None else default_evo_steps(sched)
    return SearchConfig(
        strategy="evosearch",
        guidance=guidance,
        population=population,
        evo_steps=steps,
        elite_count=elite_count,
        mutation_scale=mutation_scale,
    )


def run_matrix(plan: ExperimentPlan) -> MetricTable:
    """Full grid: strategies x schemes x alphas x populations, one row group
    per configuration. Naive collapses to a single population-1 entry per
    scheme."""
    task = toy.build_default_task(plan.task_seed)
    sched = make_schedule()
    registry = built_in_rewards(task)
    stats = calibrate_builtin_stats(task, sched, plan.calibration_samples)
    rows: list[RunRow] = []
    for strategy in plan.strategies:
        populations = (1,) if strategy == "naive" else plan.populations
        for scheme in plan.schemes:
            alphas = plan.alphas if scheme == "score" else (None,)
            for alpha in alphas:
                guidance = build_guidance(scheme, alpha, stats)
                for population in populations:
                    cfg = _make_config(
                        strategy,
                        guidance,
                        population,
                        sched,
                        plan.evo_steps,
                        plan.elite_count,
                        plan.mutation_scale,
                    )
                    outcomes = run_config_over_seeds(
                        task, sched, cfg, plan.seeds, registry, jobs=plan.jobs
                    )
                    rows.extend(
                        aggregate_rows(strategy, scheme, alpha, cfg.population, outcomes, stats)
                    )
    return MetricTable(rows=tuple(rows))


def fixed_pool_scores(
    task: Task,
    prompt,
    sched: Schedule,
    population: int,
    master_seed: int,
    registry=None,
):
    """Score matrix for an independently denoised candidate pool.

    Candidate i uses the stream (master_seed, i, 0), so pools with a larger
    population extend smaller ones instead of reshuffling them. Returns
    (raw matrix over built-in reward order [alignment, quality], waveforms).
    """
    registry = registry if registry is not None else built_in_rewards(task)
    lat0 = np.stack(
        [toy.make_stream(master_seed, i, 0).standard_normal(task.prior.dim) for i in range(population)]
    )
    finals = toy.reverse_sample(lat0, task.prior, sched)
    waves = [toy.decode_waveform(f, task.decoder) for f in finals]
    names = list(registry)
    raw = reward_matrix(waves, prompt, names, task, sched, registry)
    return names, raw, waves


def sweep_alpha(
    task: Task,
    sched: Schedule,
    alphas,
    population: int,
    seeds,
    stats: dict[str, RewardStats],
    strategy: str = "best_of_n",
    registry=None,
    evo_steps: tuple[int, ...] | None = None,
    elite_count: int | None = None,
    mutation_scale: float = DEFAULT_MUTATION_SCALE,
    jobs: int = 1,
):
    """Composite-weight sweep. Returns (table, selections).

    Best-of-N re-selects from one fixed candidate pool per (seed, prompt),
    so the sweep isolates the selection rule; evosearch reruns the search
    per alpha because guidance steers the trajectories themselves.
    Selections hold one record per (alpha, seed, prompt) with the winner's
    index and scores.
    """
    registry = registry if registry is not None else built_in_rewards(task)
    alphas = [float(a) for a in alphas]
    seeds = list(seeds)
    rows: list[RunRow] = []
    selections: list[dict] = []
    if strategy == "best_of_n":
        pools = {}
        for seed in seeds:
            for pi, prompt in enumerate(task.prompts):
                names, raw, _ = fixed_pool_scores(
                    task, prompt, sched, population, derived_run_seed(seed, pi), registry
                )
                pools[(seed, pi)] = (names, raw)
        nfe = population * sched.num_steps
        for alpha in alphas:
            cfg_g = alpha_score_config(alpha, stats["alignment"], stats["quality"])
            outcomes = []
            for seed in seeds:
                sums: dict[str, float] = {}
                guidance_sum = 0.0
                for pi, prompt in enumerate(task.prompts):
                    names, raw = pools[(seed, pi)]
                    cols = [names.index(r) for r in cfg_g.rewards]
                    guidance = apply_scheme(raw[:, cols], cfg_g)
                    win = int(np.argmax(guidance))
                    rec = {
                        "alpha": alpha,
                        "seed": seed,
                        "prompt": prompt.prompt_id,
                        "selected_index": win,
                        "guidance": float(guidance[win]),
                    }
                    for j, name in enumerate(names):
                        rec[f"raw_{name}"] = float(raw[win, j])
                        if name in stats:
                            st = stats[name]
                            rec[f"z_{name}"] = float((raw[win, j] - st.mu) / st.sigma)
                        sums[name] = sums.get(name, 0.0) + float(raw[win, j])
                    selections.append(rec)
                    guidance_sum += float(guidance[win])
                k = len(task.prompts)
                outcomes.append(
                    SeedOutcome(
                        seed=seed,
                        raw={n: s / k for n, s in sums.items()},
                        guidance=guidance_sum / k,
                        nfe=nfe,
                    )
                )
            rows.extend(aggregate_rows(strategy, "score", alpha, population, outcomes, stats))
    elif strategy == "evosearch":
        for alpha in alphas:
            guidance = alpha_score_config(alpha, stats["alignment"], stats["quality"])
            cfg = _make_config(
                "evosearch", guidance, population, sched, evo_steps, elite_count, mutation_scale
            )
            outcomes = run_config_over_seeds(task, sched, cfg, seeds, registry, jobs=jobs)
            rows.extend(aggregate_rows("evosearch", "score", alpha, population, outcomes, stats))
            for o in outcomes:
                selections.append(
                    {"alpha": alpha, "seed": o.seed, "prompt": "(averaged)", "guidance": o.guidance}
                )
    else:
        raise ValueError(f"sweep_alpha does not support strategy {strategy!r}")
    return MetricTable(rows=tuple(rows)), selections


def sweep_nfe(
    task: Task,
    sched: Schedule,
    populations,
    seeds,
    stats: dict[str, RewardStats],
    alpha: float = 0.5,
    registry=None,
    evo_steps: tuple[int, ...] | None = None,
    elite_count: int | None = None,
    mutation_scale: float = DEFAULT_MUTATION_SCALE,
    matched: bool = True,
    jobs: int = 1,
) -> MetricTable:
    """Compute-budget sweep at a fixed composite weight.

    For each best-of-N population, evosearch runs at the largest population
    whose denoiser-call count stays within the same budget (matched=True),
    or at the same population (matched=False).
    """
    registry = registry if registry is not None else built_in_rewards(task)
    steps = tuple(evo_steps) if evo_steps is not None else default_evo_steps(sched)
    guidance = alpha_score_config(alpha, stats["alignment"], stats["quality"])
    rows: list[RunRow] = []
    naive_cfg = SearchConfig(strategy="naive", guidance=guidance, population=1)
    outcomes = run_config_over_seeds(task, sched, naive_cfg, seeds, registry, jobs=jobs)
    rows.extend(aggregate_rows("naive", "score", alpha, 1, outcomes, stats))
    for population in populations:
        cfg = SearchConfig(strategy="best_of_n", guidance=guidance, population=population)
        outcomes = run_config_over_seeds(task, sched, cfg, seeds, registry, jobs=jobs)
        rows.extend(aggregate_rows("best_of_n", "score", alpha, population, outcomes, stats))
        evo_pop = matched_evo_population(population, sched, len(steps)) if matched else population
        cfg = _make_config("evosearch", guidance, evo_pop, sched, steps, elite_count, mutation_scale)
        outcomes = run_config_over_seeds(task, sched, cfg, seeds, registry, jobs=jobs)
        rows.extend(aggregate_rows("evosearch", "score", alpha, evo_pop, outcomes, stats))
    return MetricTable(rows=tuple(rows))


def distribution_report(
    task: Task,
    sched: Schedule,
    cfg: SearchConfig,
    seeds,
    stats: dict[str, RewardStats],
    registry=None,
    jobs: int = 1,
) -> dict:
    """Five-number summaries plus mean/std of prompt-averaged scores across
    seeds, raw and normalized, for one configuration."""
    registry = registry if registry is not None else built_in_rewards(task)
    outcomes = run_config_over_seeds(task, sched, cfg, seeds, registry, jobs=jobs)
    report = {
        "strategy": cfg.strategy,
        "scheme": cfg.guidance.scheme,
        "population": cfg.population,
        "nfe": outcomes[0].nfe,
        "num_seeds": len(outcomes),
        "rewards": {},
        "guidance": _summary([o.guidance for o in outcomes]),
    }
    for name in outcomes[0].raw:
        raw_vals = [o.raw[name] for o in outcomes]
        entry = {"raw": _summary(raw_vals)}
        if name in stats:
            st = stats[name]
            entry["z"] = _summary([(v - st.mu) / st.sigma for v in raw_vals])
        report["rewards"][name] = entry
    return report


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    q = np.percentile(v, [0, 25, 50, 75, 100])
    mean, std = _mean_std(v)
    return {
        "min": float(q[0]),
        "q1": float(q[1]),
        "median": float(q[2]),
        "q3": float(q[3]),
        "max": float(q[4]),
        "mean": mean,
        "std": std,
    }


def _fmt_float(x: float | None) -> str:
    if x is None:
        return ""
    return repr(float(x))


def emit_csv(table: MetricTable, path) -> None:
    """Write the table with exact round-trip float formatting.

    Accepts a filesystem path or an open text stream.
    """
    if hasattr(path, "write"):
        _emit_csv_stream(table, path)
        return
    with open(path, "w", newline="") as fh:
        _emit_csv_stream(table, fh)


def _emit_csv_stream(table: MetricTable, fh) -> None:
    w = csv.writer(fh)
    w.writerow(CSV_HEADER.split(","))
    for r in table.rows:
        w.writerow(
            [
                r.strategy,
                r.scheme,
                _fmt_float(r.alpha),
                r.population,
                r.nfe,
                r.reward_name,
                _fmt_float(r.raw_mean),
                _fmt_float(r.raw_std),
                _fmt_float(r.z_mean),
                _fmt_float(r.z_std),
                _fmt_float(r.guidance_mean),
                _fmt_float(r.guidance_std),
                ";".join(str(s) for s in r.seeds),
            ]
        )


def read_metric_csv(path) -> MetricTable:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER.split(","):
            raise ValueError(f"unexpected CSV header in {path}")
        for rec in reader:
            rows.append(
                RunRow(
                    strategy=rec["strategy"],
                    scheme=rec["scheme"],
                    alpha=float(rec["alpha"]) if rec["alpha"] else None,
                    population=int(rec["population"]),
                    nfe=int(rec["nfe"]),
                    reward_name=rec["reward_name"],
                    raw_mean=float(rec["raw_mean"]),
                    raw_std=float(rec["raw_std"]),
                    z_mean=float(rec["z_mean"]),
                    z_std=float(rec["z_std"]),
                    guidance_mean=float(rec["guidance_mean"]),
                    guidance_std=float(rec["guidance_std"]),
                    seeds=tuple(int(s) for s in rec["seeds"].split(";") if s),
                )
            )
    return MetricTable(rows=tuple(rows))


PLOT_KINDS = ("nfe_curve", "alpha_curve", "boxes")

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 20, 36, 48


def _xmap(x, lo, hi):
    span = hi - lo if hi > lo else 1.0
    return _ML + (x - lo) / span * (_W - _ML - _MR)


def _ymap(y, lo, hi):
    span = hi - lo if hi > lo else 1.0
    return _H - _MB - (y - lo) / span * (_H - _MT - _MB)


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw_step = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw_step))
    for mult in (1, 2, 2.5, 5, 10):
        step = mult * mag
        if step >= raw_step:
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out or [lo]


def _svg_open(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]


def _svg_axes(parts, xlo, xhi, ylo, yhi, xlabel, ylabel):
    x0, x1 = _ML, _W - _MR
    y0, y1 = _H - _MB, _MT
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for tx in _ticks(xlo, xhi):
        px = _xmap(tx, xlo, xhi)
        parts.append(f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(f'<text x="{px:.2f}" y="{y0 + 16}" text-anchor="middle">{tx:g}</text>')
    for ty in _ticks(ylo, yhi):
        py = _ymap(ty, ylo, yhi)
        parts.append(f'<line x1="{x0 - 4}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 7}" y="{py + 3:.2f}" text-anchor="end">{ty:g}</text>')
    parts.append(
        f'<text x="{(x0 + x1) / 2}" y="{_H - 10}" text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{(y0 + y1) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2})">{ylabel}</text>'
    )


def _series_svg(parts, series, xlo, xhi, ylo, yhi):
    """series: list of (label, xs, ys, stds)."""
    for i, (label, xs, ys, stds) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = [(_xmap(x, xlo, xhi), _ymap(y, ylo, yhi)) for x, y in zip(xs, ys)]
        if stds is not None and len(xs) > 1:
            upper = [(_xmap(x, xlo, xhi), _ymap(y + s, ylo, yhi)) for x, y, s in zip(xs, ys, stds)]
            lower = [(_xmap(x, xlo, xhi), _ymap(y - s, ylo, yhi)) for x, y, s in zip(xs, ys, stds)]
            poly = " ".join(f"{px:.2f},{py:.2f}" for px, py in upper + lower[::-1])
            parts.append(f'<polygon points="{poly}" fill="{color}" opacity="0.15"/>')
        if len(pts) > 1:
            line = " ".join(f"{px:.2f},{py:.2f}" for px, py in pts)
            parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for px, py in pts:
            parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{color}"/>')
        ly = _MT + 14 + 14 * i
        parts.append(f'<rect x="{_W - _MR - 110}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{_W - _MR - 96}" y="{ly}">{label}</text>')


def _bounds(values, pad=0.05):
    lo, hi = float(min(values)), float(max(values))
    if hi == lo:
        hi = lo + 1.0
    span = hi - lo
    return lo - pad * span, hi + pad * span


def emit_svg_plot(source, kind: str, path, title: str | None = None) -> None:
    """Render a plot to a standalone SVG file.

    Args:
        source: a MetricTable for "nfe_curve" and "alpha_curve", a
            distribution_report dict for "boxes".
        kind: one of nfe_curve, alpha_curve, boxes.
        path: output file.
        title: heading; a default is derived from the kind.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    if kind == "boxes":
        _plot_boxes(source, path, title or "score distributions")
        return
    table: MetricTable = source
    if not table.rows:
        raise ValueError("empty table")
    if kind == "nfe_curve":
        series = []
        strategies = sorted({r.strategy for r in table.rows})
        ref_reward = table.rows[0].reward_name
        for strat in strategies:
            rows = sorted(
                (r for r in table.rows if r.strategy == strat and r.reward_name == ref_reward),
                key=lambda r: r.nfe,
            )
            series.append(
                (
                    strat,
                    [r.nfe for r in rows],
                    [r.guidance_mean for r in rows],
                    [r.guidance_std for r in rows],
                )
            )
        xlabel, ylabel = "denoiser calls", "guidance score"
        deftitle = "guidance score vs compute"
    else:
        series = []
        rewards = sorted({r.reward_name for r in table.rows})
        for name in rewards:
            rows = sorted(
                (r for r in table.rows if r.reward_name == name and r.alpha is not None),
                key=lambda r: r.alpha,
            )
            if not rows or math.isnan(rows[0].z_mean):
                continue
            series.append(
                (
                    name,
                    [r.alpha for r in rows],
                    [r.z_mean for r in rows],
                    [r.z_std for r in rows],
                )
            )
        xlabel, ylabel = "alignment weight", "normalized score"
        deftitle = "reward trade-off vs composite weight"
    all_x = [x for _, xs, _, _ in series for x in xs]
    all_y = [y + s for _, _, ys, ss in series for y, s in zip(ys, ss)] + [
        y - s for _, _, ys, ss in series for y, s in zip(ys, ss)
    ]
    xlo, xhi = _bounds(all_x)
    ylo, yhi = _bounds(all_y)
    parts = _svg_open(title or deftitle)
    _svg_axes(parts, xlo, xhi, ylo, yhi, xlabel, ylabel)
    _series_svg(parts, series, xlo, xhi, ylo, yhi)
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def _plot_boxes(report: dict, path, title: str) -> None:
    groups = []
    for name, entry in report["rewards"].items():
        groups.append((f"{name} (raw)", entry["raw"]))
        if "z" in entry:
            groups.append((f"{name} (z)", entry["z"]))
    groups.append(("guidance", report["guidance"]))
    all_vals = [s[k] for _, s in groups for k in ("min", "max")]
    ylo, yhi = _bounds(all_vals)
    parts = _svg_open(title)
    _svg_axes(parts, 0, len(groups), ylo, yhi, "", "score")
    slot = (_W - _ML - _MR) / len(groups)
    half = min(slot * 0.3, 40)
    for i, (label, s) in enumerate(groups):
        cx = _ML + slot * (i + 0.5)
        color = _PALETTE[i % len(_PALETTE)]
        y_min, y_q1 = _ymap(s["min"], ylo, yhi), _ymap(s["q1"], ylo, yhi)
        y_med, y_q3 = _ymap(s["median"], ylo, yhi), _ymap(s["q3"], ylo, yhi)
        y_max = _ymap(s["max"], ylo, yhi)
        parts.append(f'<line x1="{cx:.2f}" y1="{y_min:.2f}" x2="{cx:.2f}" y2="{y_q1:.2f}" stroke="black"/>')
        parts.append(f'<line x1="{cx:.2f}" y1="{y_q3:.2f}" x2="{cx:.2f}" y2="{y_max:.2f}" stroke="black"/>')
        parts.append(
            f'<rect x="{cx - half:.2f}" y="{y_q3:.2f}" width="{2 * half:.2f}" '
            f'height="{abs(y_q1 - y_q3):.2f}" fill="{color}" opacity="0.4" stroke="black"/>'
        )
        parts.append(
            f'<line x1="{cx - half:.2f}" y1="{y_med:.2f}" x2="{cx + half:.2f}" y2="{y_med:.2f}" '
            f'stroke="black" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{cx:.2f}" y="{_H - _MB + 16}" text-anchor="middle">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
