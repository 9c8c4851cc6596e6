"""Reward functions, calibration statistics, and the guidance schemes that
combine them: single raw reward, rank aggregation, or the standardized
composite (z-normalize each reward, then weight)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from . import toy
from .errors import DegenerateCalibrationError, StaleStatsError
from .schedule import Schedule
from .toy import Decoder, PromptSpec, Task

SCHEMES = ("single", "rank_aggregation", "score")


@dataclass(frozen=True)
class RewardSpec:
    """A named reward: a pure function from (waveform, prompt) to a raw score."""

    name: str
    kind: str  # alignment | quality | external
    evaluator: Callable[[np.ndarray, PromptSpec], float]


@dataclass(frozen=True)
class RewardStats:
    """Calibration statistics for one reward on one task.

    Args:
        reward_name: which reward these stats normalize.
        mu: calibration-set mean.
        sigma: calibration-set standard deviation, unbiased (n-1), > 0.
        sample_count: calibration-set size.
        task_fingerprint: hash of the task the set was drawn from; stats are
            only usable while this matches the active task.
    """

    reward_name: str
    mu: float
    sigma: float
    sample_count: int
    task_fingerprint: str


@dataclass(frozen=True)
class GuidanceConfig:
    """Selection rule for a candidate set.

    Args:
        scheme: one of "single", "rank_aggregation", "score".
        rewards: ordered reward names; exactly one for single, at least two
            otherwise.
        weights: per-reward weights in [0, 1] summing to 1 (score only). For
            the two-reward case weights = (alpha, 1 - alpha) with alpha the
            alignment weight.
        stats: one RewardStats per reward, in the same order (score only).
    """

    scheme: str
    rewards: tuple[str, ...]
    weights: tuple[float, ...] | None = None
    stats: tuple[RewardStats, ...] | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "single":
            if len(self.rewards) != 1:
                raise ValueError("single scheme takes exactly one reward")
            if self.weights is not None or self.stats is not None:
                raise ValueError("single scheme takes neither weights nor stats")
        else:
            if len(self.rewards) < 2:
                raise ValueError(f"{self.scheme} needs at least two rewards")
        if self.scheme == "rank_aggregation" and (self.weights or self.stats):
            raise ValueError("rank_aggregation takes neither weights nor stats")
        if self.scheme == "score":
            if self.weights is None or len(self.weights) != len(self.rewards):
                raise ValueError("score scheme needs one weight per reward")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or np.any(w > 1) or abs(float(w.sum()) - 1.0) > 1e-12:
                raise ValueError("weights must lie in [0,1] and sum to 1")
            if self.stats is None or len(self.stats) != len(self.rewards):
                raise ValueError("score scheme needs one RewardStats per reward")
            for name, st in zip(self.rewards, self.stats):
                if st.reward_name != name:
                    raise ValueError(f"stats for {st.reward_name!r} paired with reward {name!r}")


def reward_alignment(waveform: np.ndarray, prompt: PromptSpec) -> float:
    """Cosine between the waveform's unit-normalized DFT magnitude and the
    prompt's target spectrum, clamped to [0, 1]. All-zero waveforms score 0."""
    return float(_alignment_batch(np.asarray(waveform, dtype=float)[None, :], prompt)[0])


def _alignment_batch(waveforms: np.ndarray, prompt: PromptSpec) -> np.ndarray:
    mag = np.abs(np.fft.rfft(waveforms, axis=-1))
    norm = np.linalg.norm(mag, axis=-1)
    norm = np.where(norm == 0, 1.0, norm)
    return np.clip(mag @ prompt.target_spectrum / norm, 0.0, 1.0)


def reward_quality(waveform: np.ndarray, dec: Decoder) -> float:
    """Signal-band energy fraction of the waveform's least-squares projection
    onto the decoder basis. 1 means no noise-basis energy; all-zero scores 0."""
    waveform = np.asarray(waveform, dtype=float)
    if waveform.shape[-1] != dec.num_samples:
        raise ValueError(
            f"waveform length {waveform.shape[-1]} does not match decoder ({dec.num_samples})"
        )
    return float(_quality_batch(waveform[None, :], dec)[0])


def _quality_batch(waveforms: np.ndarray, dec: Decoder) -> np.ndarray:
    ds = dec.num_signal_dims
    coeff = waveforms @ dec._pinv.T
    e_signal = np.sum((coeff[:, :ds] @ dec._basis[:, :ds].T) ** 2, axis=-1)
    e_noise = np.sum((coeff[:, ds:] @ dec._basis[:, ds:].T) ** 2, axis=-1)
    total = e_signal + e_noise
    total = np.where(total == 0, 1.0, total)
    return e_signal / total


def built_in_rewards(task: Task) -> dict[str, RewardSpec]:
    """The two analytic rewards every experiment ships with."""
    dec = task.decoder
    return {
        "alignment": RewardSpec(
            name="alignment",
            kind="alignment",
            evaluator=lambda wv, prompt: reward_alignment(wv, prompt),
        ),
        "quality": RewardSpec(
            name="quality",
            kind="quality",
            evaluator=lambda wv, prompt: reward_quality(wv, dec),
        ),
    }


DEFAULT_CALIBRATION_SIZE = 256
DEFAULT_CALIBRATION_SEED = 10_000_001


def calibration_waveforms(
    task: Task, sched: Schedule, num_samples: int, seed: int
) -> tuple[np.ndarray, list[PromptSpec]]:
    """The shared calibration set: naive full-trajectory generations with
    prompts cycled uniformly over the catalog. Sample i draws its initial
    latent from stream (seed, i, 0)."""
    init = np.stack(
        [toy.make_stream(seed, i, 0).standard_normal(task.prior.dim) for i in range(num_samples)]
    )
    x0 = toy.reverse_sample(init, task.prior, sched)
    waveforms = toy.decode_waveform(x0, task.decoder)
    prompts = [task.prompts[i % len(task.prompts)] for i in range(num_samples)]
    return waveforms, prompts


def calibrate_stats(
    task: Task,
    sched: Schedule,
    reward: RewardSpec,
    num_samples: int = DEFAULT_CALIBRATION_SIZE,
    seed: int = DEFAULT_CALIBRATION_SEED,
) -> RewardStats:
    """Estimate (mu, sigma) for a reward over naive generations, pooled across prompts."""
    if num_samples < 2:
        raise ValueError("calibration needs at least 2 samples")
    waveforms, prompts = calibration_waveforms(task, sched, num_samples, seed)
    scores = np.array(
        [reward.evaluator(waveforms[i], prompts[i]) for i in range(num_samples)]
    )
    mu = float(scores.mean())
    sigma = float(scores.std(ddof=1))
    if sigma < 1e-9:
        raise DegenerateCalibrationError(
            f"reward {reward.name!r} is constant ({mu}) over the calibration set"
        )
    return RewardStats(
        reward_name=reward.name,
        mu=mu,
        sigma=sigma,
        sample_count=num_samples,
        task_fingerprint=toy.task_fingerprint(task),
    )


def stats_from_scores(reward_name: str, scores: Sequence[float], task_fingerprint: str) -> RewardStats:
    """Stats from an explicit score list; used by tests and by worker-backed calibration."""
    arr = np.asarray(scores, dtype=float)
    if arr.size < 2:
        raise ValueError("need at least 2 scores")
    sigma = float(arr.std(ddof=1))
    if sigma < 1e-9:
        raise DegenerateCalibrationError(f"reward {reward_name!r} is constant over the given scores")
    return RewardStats(
        reward_name=reward_name,
        mu=float(arr.mean()),
        sigma=sigma,
        sample_count=int(arr.size),
        task_fingerprint=task_fingerprint,
    )


def normalize(s: float, stats: RewardStats) -> float:
    """z = (s - mu) / sigma."""
    return (s - stats.mu) / stats.sigma


def composite_score(z: Sequence[float], weights: Sequence[float]) -> float:
    """Weighted sum of z-scores; weights must lie in [0,1] and sum to 1."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(weights, dtype=float)
    if z.shape != w.shape:
        raise ValueError(f"{z.size} z-scores but {w.size} weights")
    if np.any(w < 0) or np.any(w > 1) or abs(float(w.sum()) - 1.0) > 1e-12:
        raise ValueError("weights must lie in [0,1] and sum to 1")
    return float(z @ w)


def rank_aggregate(score_matrix: np.ndarray) -> np.ndarray:
    """Rank-sum aggregation of an (N candidates x K rewards) raw score matrix.

    Per reward, candidates are ranked descending (rank 1 best, ties averaged);
    the aggregate is the negated rank sum so that higher stays better.
    """
    m = np.atleast_2d(np.asarray(score_matrix, dtype=float))
    ranks = rankdata(-m, method="average", axis=0)
    return -ranks.sum(axis=1)


def estimate_intermediate_reward(
    x_t: np.ndarray,
    t: int,
    prompt: PromptSpec,
    reward: RewardSpec,
    task: Task,
    sched: Schedule,
    mode: str = "mean",
    num_draws: int = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Reward of an intermediate latent.

    Default mode scores the decoded posterior mean (one denoiser call, one
    reward call). Monte Carlo mode averages the reward over exact posterior
    draws instead; the two differ because rewards are nonlinear.
    """
    if mode == "mean":
        x0_hat = toy.posterior_x0_mean(x_t, t, task.prior, sched)
        return float(reward.evaluator(toy.decode_waveform(x0_hat, task.decoder), prompt))
    if mode == "mc":
        if rng is None:
            raise ValueError("mc mode needs an rng")
        vals = []
        for _ in range(num_draws):
            draw = toy.sample_posterior(x_t, t, task.prior, sched, rng)
            vals.append(reward.evaluator(toy.decode_waveform(draw, task.decoder), prompt))
        return float(np.mean(vals))
    raise ValueError(f"unknown mode {mode!r}")


def _check_stats_fresh(cfg: GuidanceConfig, task: Task) -> None:
    if cfg.scheme != "score":
        return
    fp = toy.task_fingerprint(task)
    for st in cfg.stats:
        if st.task_fingerprint != fp:
            raise StaleStatsError(
                f"stats for {st.reward_name!r} were calibrated on a different task"
            )


def reward_matrix(
    states: Sequence,
    prompt: PromptSpec,
    reward_names: Sequence[str],
    task: Task,
    sched: Schedule | None = None,
    registry: dict[str, RewardSpec] | None = None,
) -> np.ndarray:
    """Raw scores for candidates, shape (N, K).

    States are either decoded waveforms or (latent, timestep) pairs; for the
    latter each candidate is denoised once (posterior mean) and decoded, and
    every reward scores that shared decode.
    """
    registry = registry if registry is not None else built_in_rewards(task)
    specs = []
    for name in reward_names:
        if name not in registry:
            raise KeyError(f"reward {name!r} is not registered")
        specs.append(registry[name])
    rows = []
    for state in states:
        if isinstance(state, tuple):
            latent, t = state
            if sched is None:
                raise ValueError("intermediate states need a schedule")
            x0_hat = toy.posterior_x0_mean(np.asarray(latent, dtype=float), t, task.prior, sched)
            wave = toy.decode_waveform(x0_hat, task.decoder)
        else:
            wave = np.asarray(state, dtype=float)
        rows.append([spec.evaluator(wave, prompt) for spec in specs])
    return np.asarray(rows, dtype=float)


def apply_scheme(raw: np.ndarray, cfg: GuidanceConfig) -> np.ndarray:
    """Turn an (N, K) raw score matrix into N guidance scores under cfg."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    if raw.shape[1] != len(cfg.rewards):
        raise ValueError(f"matrix has {raw.shape[1]} columns for {len(cfg.rewards)} rewards")
    if cfg.scheme == "single":
        return raw[:, 0].copy()
    if cfg.scheme == "rank_aggregation":
        return rank_aggregate(raw)
    z = (raw - np.array([st.mu for st in cfg.stats])) / np.array([st.sigma for st in cfg.stats])
    return z @ np.asarray(cfg.weights, dtype=float)


def evaluate_guidance(
    states: Sequence,
    prompt: PromptSpec,
    cfg: GuidanceConfig,
    task: Task,
    sched: Schedule | None = None,
    registry: dict[str, RewardSpec] | None = None,
) -> np.ndarray:
    """Guidance score per candidate, higher better, comparable within this call only."""
    _check_stats_fresh(cfg, task)
    raw = reward_matrix(states, prompt, cfg.rewards, task, sched, registry)
    return apply_scheme(raw, cfg)


def alpha_score_config(
    alpha: float, align_stats: RewardStats, quality_stats: RewardStats
) -> GuidanceConfig:
    """The standard two-reward composite: weight alpha on alignment, 1-alpha on quality."""
    return GuidanceConfig(
        scheme="score",
        rewards=("alignment", "quality"),
        weights=(float(alpha), 1.0 - float(alpha)),
        stats=(align_stats, quality_stats),
    )


def stats_to_dict(stats: RewardStats) -> dict:
    return {
        "reward_name": stats.reward_name,
        "mu": stats.mu,
        "sigma": stats.sigma,
        "sample_count": stats.sample_count,
        "task_fingerprint": stats.task_fingerprint,
    }


def stats_from_dict(doc: dict) -> RewardStats:
    return RewardStats(
        reward_name=doc["reward_name"],
        mu=float(doc["mu"]),
        sigma=float(doc["sigma"]),
        sample_count=int(doc["sample_count"]),
        task_fingerprint=doc["task_fingerprint"],
    )
