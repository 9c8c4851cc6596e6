"""Inference-time scaling for a toy diffusion audio generator.

Search over denoising trajectories (naive, best-of-N, evolutionary) with
pluggable reward guidance: single reward, z-normalized weighted composite,
or rank aggregation.
"""

from .errors import (
    DegenerateCalibrationError,
    SearchConfigError,
    StaleStatsError,
    WorkerError,
)
from .rewards import (
    GuidanceConfig,
    RewardSpec,
    RewardStats,
    alpha_score_config,
    built_in_rewards,
    calibrate_stats,
    composite_score,
    evaluate_guidance,
    normalize,
    rank_aggregate,
    reward_alignment,
    reward_quality,
)
from .schedule import Schedule, ddim_step, forward_noise, make_schedule
from .search import RunResult, SearchConfig, run_search
from .toy import Task, build_default_task, decode_waveform, posterior_x0_mean, sample_prior

__version__ = "0.1.0"

__all__ = [
    "DegenerateCalibrationError",
    "GuidanceConfig",
    "RewardSpec",
    "RewardStats",
    "RunResult",
    "Schedule",
    "SearchConfig",
    "SearchConfigError",
    "StaleStatsError",
    "Task",
    "WorkerError",
    "alpha_score_config",
    "build_default_task",
    "built_in_rewards",
    "calibrate_stats",
    "composite_score",
    "ddim_step",
    "decode_waveform",
    "evaluate_guidance",
    "forward_noise",
    "make_schedule",
    "normalize",
    "posterior_x0_mean",
    "rank_aggregate",
    "reward_alignment",
    "reward_quality",
    "run_search",
    "sample_prior",
    "__version__",
]
