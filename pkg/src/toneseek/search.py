"""Inference-time scaling strategies: naive sampling, Best-of-N, and
evolutionary search over denoising trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import toy
from .errors import SearchConfigError
from .rewards import GuidanceConfig, RewardSpec, apply_scheme, built_in_rewards, reward_matrix
from .schedule import Schedule, ddim_step
from .toy import Task

STRATEGIES = ("naive", "best_of_n", "evosearch")

DEFAULT_MUTATION_SCALE = 0.2


def default_evo_steps(sched: Schedule) -> tuple[int, ...]:
    """Three evolution steps at 75%, 50%, 25% of the step range, descending."""
    top = sched.num_steps - 1
    return tuple(round(f * top) for f in (0.75, 0.5, 0.25))


@dataclass(frozen=True)
class SearchConfig:
    """Configuration for one search run.

    Args:
        strategy: "naive", "best_of_n", or "evosearch".
        guidance: selection rule. Naive runs use it for reporting only.
        population: candidate count N. Naive requires N = 1.
        evo_steps: evolution timesteps, strictly decreasing, each in [1, T-1]
            (evosearch only; empty means "use defaults at run time" is NOT
            implied, pass default_evo_steps explicitly or via the harness).
        elite_count: survivors per evolution step; None means ceil(N / 4).
        mutation_scale: sigma_mut for elite mutation.
        master_seed: root of every random stream in the run.
    """

    strategy: str
    guidance: GuidanceConfig
    population: int = 1
    evo_steps: tuple[int, ...] = ()
    elite_count: int | None = None
    mutation_scale: float = DEFAULT_MUTATION_SCALE
    master_seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise SearchConfigError(f"unknown strategy {self.strategy!r}")
        if self.population < 1:
            raise SearchConfigError("population must be at least 1")
        if self.strategy == "naive" and self.population != 1:
            raise SearchConfigError("naive sampling is defined for population 1")
        if self.mutation_scale < 0:
            raise SearchConfigError("mutation_scale must be nonnegative")
        if self.elite_count is not None and not (1 <= self.elite_count <= self.population):
            raise SearchConfigError("elite_count must lie in [1, population]")
        if self.evo_steps and any(
            later >= earlier for earlier, later in zip(self.evo_steps, self.evo_steps[1:])
        ):
            raise SearchConfigError("evo_steps must be strictly decreasing")
        if self.evo_steps and self.evo_steps[-1] < 1:
            raise SearchConfigError("evo_steps must stay above timestep 0")

    def resolved_elite_count(self) -> int:
        return self.elite_count if self.elite_count is not None else math.ceil(self.population / 4)


@dataclass
class Candidate:
    """One latent trajectory under denoising."""

    index: int
    latent: np.ndarray
    score_history: list = field(default_factory=list)  # (timestep, raw tuple, guidance)
    lineage: int | None = None


@dataclass(frozen=True)
class StepRecord:
    """Score table at one evaluation point (an evolution step, or the final selection)."""

    t: int
    generation: int
    raw: np.ndarray  # (N, num rewards scored)
    guidance: np.ndarray  # (N,)
    elites: tuple[int, ...] | None


@dataclass(frozen=True)
class RunResult:
    """Outcome of one search run.

    Args:
        selected_index: winning candidate slot.
        selected_latent: its final clean latent estimate.
        selected_waveform: its decoded audio.
        final_scores: {"raw": {reward: score}, "z": {reward: z}}; z is present
            only for rewards the guidance config carries stats for.
        guidance_score: the winner's final guidance score.
        nfe: denoiser-call count (posterior-mean evaluations).
        seed: master seed of the run.
        trace: per-evaluation score tables, final selection last.
    """

    selected_index: int
    selected_latent: np.ndarray
    selected_waveform: np.ndarray
    final_scores: dict
    guidance_score: float
    nfe: int
    seed: int
    trace: tuple[StepRecord, ...]


def select_elites(scores, k: int) -> list[int]:
    """Indices of the k largest scores, ties to the lowest index, ranked best first."""
    scores = np.asarray(scores, dtype=float)
    n = len(scores)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    return sorted(range(n), key=lambda i: (-scores[i], i))[:k]


def mutate(
    elite_latent: np.ndarray,
    t: int,
    sigma_mut: float,
    sched: Schedule,
    stream: np.random.Generator,
) -> np.ndarray:
    """Elite plus schedule-scaled noise: elite + sigma_mut * sqrt(1-abar_t) * eps."""
    if sigma_mut < 0:
        raise ValueError("sigma_mut must be nonnegative")
    if not 0 <= t < sched.num_steps:
        raise ValueError(f"timestep {t} outside [0, {sched.num_steps})")
    eps = stream.standard_normal(len(elite_latent))
    return elite_latent + sigma_mut * np.sqrt(1.0 - sched.alpha_bars[t]) * eps


def _report_reward_names(cfg: SearchConfig, registry: dict[str, RewardSpec]) -> list[str]:
    """Guidance rewards first (scheme column order), then any other registered reward."""
    names = list(cfg.guidance.rewards)
    names.extend(n for n in registry if n not in names)
    return names


def _final_result(
    candidates: list[Candidate],
    final_latents: list[np.ndarray],
    prompt,
    cfg: SearchConfig,
    task: Task,
    sched: Schedule,
    registry: dict[str, RewardSpec],
    nfe: int,
    trace: list[StepRecord],
    generation: int,
) -> RunResult:
    from .rewards import _check_stats_fresh

    _check_stats_fresh(cfg.guidance, task)
    names = _report_reward_names(cfg, registry)
    waves = [toy.decode_waveform(lat, task.decoder) for lat in final_latents]
    raw = reward_matrix(waves, prompt, names, task, sched, registry)
    guided_cols = raw[:, : len(cfg.guidance.rewards)]
    guidance = apply_scheme(guided_cols, cfg.guidance)
    winner = int(np.argmax(guidance))
    for cand, row, g in zip(candidates, raw, guidance):
        cand.score_history.append((0, tuple(row), float(g)))
    trace.append(
        StepRecord(t=0, generation=generation, raw=raw, guidance=np.asarray(guidance), elites=None)
    )
    raw_by_name = dict(zip(names, raw[winner]))
    z_by_name = {}
    if cfg.guidance.stats:
        for st in cfg.guidance.stats:
            z_by_name[st.reward_name] = (raw_by_name[st.reward_name] - st.mu) / st.sigma
    return RunResult(
        selected_index=winner,
        selected_latent=final_latents[winner],
        selected_waveform=waves[winner],
        final_scores={"raw": {k: float(v) for k, v in raw_by_name.items()}, "z": z_by_name},
        guidance_score=float(guidance[winner]),
        nfe=nfe,
        seed=cfg.master_seed,
        trace=tuple(trace),
    )


def _denoise_candidate(latent: np.ndarray, prior, sched: Schedule) -> tuple[np.ndarray, int]:
    """Full reverse pass for one candidate; returns (clean estimate, denoiser calls)."""
    x = latent
    calls = 0
    for t in range(sched.num_steps - 1, 0, -1):
        x0_hat = toy.posterior_x0_mean(x, t, prior, sched)
        calls += 1
        x = ddim_step(x, x0_hat, t, t - 1, sched)
    x0 = toy.posterior_x0_mean(x, 0, prior, sched)
    calls += 1
    return x0, calls


def run_naive(task: Task, prompt, sched: Schedule, cfg: SearchConfig, registry=None) -> RunResult:
    """One unguided generation; rewards are reported but exert no selection pressure."""
    if cfg.strategy != "naive":
        raise SearchConfigError(f"run_naive got strategy {cfg.strategy!r}")
    registry = registry if registry is not None else built_in_rewards(task)
    cand = Candidate(index=0, latent=toy.make_stream(cfg.master_seed, 0, 0).standard_normal(task.prior.dim))
    x0, nfe = _denoise_candidate(cand.latent, task.prior, sched)
    return _final_result([cand], [x0], prompt, cfg, task, sched, registry, nfe, [], 0)


def run_best_of_n(task: Task, prompt, sched: Schedule, cfg: SearchConfig, registry=None) -> RunResult:
    """N independent trajectories, one final guided selection."""
    if cfg.strategy != "best_of_n":
        raise SearchConfigError(f"run_best_of_n got strategy {cfg.strategy!r}")
    registry = registry if registry is not None else built_in_rewards(task)
    n = cfg.population
    candidates = [
        Candidate(index=i, latent=toy.make_stream(cfg.master_seed, i, 0).standard_normal(task.prior.dim))
        for i in range(n)
    ]
    finals = []
    nfe = 0
    for cand in candidates:
        x0, calls = _denoise_candidate(cand.latent, task.prior, sched)
        finals.append(x0)
        nfe += calls
    return _final_result(candidates, finals, prompt, cfg, task, sched, registry, nfe, [], 0)


def run_evosearch(task: Task, prompt, sched: Schedule, cfg: SearchConfig, registry=None) -> RunResult:
    """Best-of-N with evolution: at each step in evo_steps, score the
    intermediate candidates, keep the elites, and replace the rest with
    mutated elite copies before denoising continues."""
    if cfg.strategy != "evosearch":
        raise SearchConfigError(f"run_evosearch got strategy {cfg.strategy!r}")
    if not cfg.evo_steps:
        raise SearchConfigError("evosearch needs evo_steps; use best_of_n for none")
    if cfg.evo_steps[0] > sched.num_steps - 1:
        raise SearchConfigError("evo_steps exceed the schedule range")
    registry = registry if registry is not None else built_in_rewards(task)
    from .rewards import _check_stats_fresh

    _check_stats_fresh(cfg.guidance, task)
    n = cfg.population
    k = cfg.resolved_elite_count()
    if k > n:
        raise SearchConfigError("elite_count exceeds population")
    evo_set = set(cfg.evo_steps)
    candidates = [
        Candidate(index=i, latent=toy.make_stream(cfg.master_seed, i, 0).standard_normal(task.prior.dim))
        for i in range(n)
    ]
    names = _report_reward_names(cfg, registry)
    trace: list[StepRecord] = []
    nfe = 0
    generation = 0
    for t in range(sched.num_steps - 1, 0, -1):
        if t in evo_set:
            generation += 1
            # evaluation: one posterior-mean decode per candidate, scored by all rewards
            states = []
            for cand in candidates:
                x0_hat = toy.posterior_x0_mean(cand.latent, t, task.prior, sched)
                nfe += 1
                states.append(toy.decode_waveform(x0_hat, task.decoder))
            raw = reward_matrix(states, prompt, names, task, sched, registry)
            guidance = apply_scheme(raw[:, : len(cfg.guidance.rewards)], cfg.guidance)
            for cand, row, g in zip(candidates, raw, guidance):
                cand.score_history.append((t, tuple(row), float(g)))
            elites = select_elites(guidance, k)
            trace.append(
                StepRecord(
                    t=t,
                    generation=generation,
                    raw=raw,
                    guidance=np.asarray(guidance),
                    elites=tuple(elites),
                )
            )
            # mutation: repopulate by cycling elites in rank order
            elite_set = set(elites)
            cursor = 0
            for slot in range(n):
                if slot in elite_set:
                    continue
                src = elites[cursor % k]
                cursor += 1
                stream = toy.make_stream(cfg.master_seed, slot, generation)
                candidates[slot].latent = mutate(
                    candidates[src].latent, t, cfg.mutation_scale, sched, stream
                )
                candidates[slot].lineage = src
        for cand in candidates:
            x0_hat = toy.posterior_x0_mean(cand.latent, t, task.prior, sched)
            nfe += 1
            cand.latent = ddim_step(cand.latent, x0_hat, t, t - 1, sched)
    finals = []
    for cand in candidates:
        x0 = toy.posterior_x0_mean(cand.latent, 0, task.prior, sched)
        nfe += 1
        finals.append(x0)
    return _final_result(
        candidates, finals, prompt, cfg, task, sched, registry, nfe, trace, generation
    )


_RUNNERS = {"naive": run_naive, "best_of_n": run_best_of_n, "evosearch": run_evosearch}


def run_search(task: Task, prompt, sched: Schedule, cfg: SearchConfig, registry=None) -> RunResult:
    """Dispatch on cfg.strategy."""
    return _RUNNERS[cfg.strategy](task, prompt, sched, cfg, registry)


def expected_nfe(cfg: SearchConfig, sched: Schedule) -> int:
    """Closed-form denoiser-call count: N*T, plus N per evolution step."""
    t = sched.num_steps
    if cfg.strategy == "naive":
        return t
    if cfg.strategy == "best_of_n":
        return cfg.population * t
    return cfg.population * t + len(cfg.evo_steps) * cfg.population


def matched_evo_population(bon_population: int, sched: Schedule, num_evo_steps: int) -> int:
    """Largest evo population whose NFE does not exceed BON at bon_population."""
    t = sched.num_steps
    return max(1, (bon_population * t) // (t + num_evo_steps))
