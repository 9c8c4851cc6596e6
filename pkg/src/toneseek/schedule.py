"""Noise schedule and the closed-form diffusion steps built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Schedule:
    """Linear-beta noise schedule.

    Timesteps are indexed 0..num_steps-1 with t = num_steps-1 the noisiest;
    denoising iterates t -> t-1.

    Args:
        num_steps: number of diffusion timesteps T.
        betas: per-step noise variances, strictly increasing, each in (0, 1).
        alpha_bars: cumulative products prod_{s<=t}(1 - beta_s), strictly
            decreasing, each in (0, 1).
    """

    num_steps: int
    betas: np.ndarray
    alpha_bars: np.ndarray


def make_schedule(num_steps: int = 100, beta_min: float = 1e-4, beta_max: float = 0.02) -> Schedule:
    """Build the linear schedule betas[t] = beta_min + (beta_max - beta_min) * t / (T-1)."""
    if num_steps < 2:
        raise ValueError(f"num_steps must be at least 2, got {num_steps}")
    if not (0.0 < beta_min < beta_max < 1.0):
        raise ValueError(
            f"schedule bounds must satisfy 0 < beta_min < beta_max < 1, got [{beta_min}, {beta_max}]"
        )
    steps = np.arange(num_steps, dtype=float)
    betas = beta_min + (beta_max - beta_min) * steps / (num_steps - 1)
    alpha_bars = np.cumprod(1.0 - betas)
    betas.setflags(write=False)
    alpha_bars.setflags(write=False)
    return Schedule(num_steps=num_steps, betas=betas, alpha_bars=alpha_bars)


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, sched: Schedule) -> np.ndarray:
    """Noise a clean latent to timestep t: sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps."""
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 and eps shapes differ: {x0.shape} vs {eps.shape}")
    if not 0 <= t < sched.num_steps:
        raise ValueError(f"timestep {t} outside [0, {sched.num_steps})")
    ab = sched.alpha_bars[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def ddim_step(
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    t: int,
    t_prev: int,
    sched: Schedule,
    eta: float = 0.0,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """One reverse update from timestep t to t_prev given an x0 estimate.

    Recovers eps_hat = (x_t - sqrt(abar_t)*x0_hat) / sqrt(1-abar_t) and returns

        sqrt(abar_prev)*x0_hat + sqrt(1 - abar_prev - sigma^2)*eps_hat + sigma*noise

    with sigma = eta * sqrt((1-abar_prev)/(1-abar_t)) * sqrt(1 - abar_t/abar_prev).
    eta = 0 is deterministic and ignores the noise argument.
    """
    if t_prev >= t:
        raise ValueError(f"t_prev must be below t, got t={t}, t_prev={t_prev}")
    if not 0 <= t < sched.num_steps:
        raise ValueError(f"timestep {t} outside [0, {sched.num_steps})")
    if t_prev < 0:
        raise ValueError(f"t_prev must be nonnegative, got {t_prev}")
    x_t = np.asarray(x_t, dtype=float)
    x0_hat = np.asarray(x0_hat, dtype=float)
    ab = sched.alpha_bars[t]
    ab_prev = sched.alpha_bars[t_prev]
    eps_hat = (x_t - np.sqrt(ab) * x0_hat) / np.sqrt(1.0 - ab)
    if eta == 0.0:
        return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
    sigma = eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab)) * np.sqrt(1.0 - ab / ab_prev)
    if noise is None:
        raise ValueError("eta > 0 requires a noise vector")
    noise = np.asarray(noise, dtype=float)
    return (
        np.sqrt(ab_prev) * x0_hat
        + np.sqrt(1.0 - ab_prev - sigma**2) * eps_hat
        + sigma * noise
    )
