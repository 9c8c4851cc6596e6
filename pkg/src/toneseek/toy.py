"""Analytic generative task: Gaussian-mixture latent prior, closed-form denoiser,
linear latent-to-waveform decoder, and the benchmark prompt catalog."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .schedule import Schedule, ddim_step

# Benchmark task constants. The mean geometry is tuned so that the alignment
# and quality rewards genuinely trade off under guidance; see build_default_task.
SIGNAL_DIMS = 8
NOISE_DIMS = 4
NUM_COMPONENTS = 4
TAU = 0.15
SAMPLE_RATE = 16000
NUM_SAMPLES = 4096
BASE_FREQ_HZ = 250.0
TONE_BASE_AMP = 0.2
NOISE_MEAN_BASE = 0.9
NOISE_MEAN_STEP = 0.03
MEAN_SQ_NORM = 3.0
NOISE_BASIS_TONE_FRACTION = 0.92


@dataclass(frozen=True)
class MixturePrior:
    """Isotropic Gaussian mixture over latents.

    Args:
        means: component means, shape (K, d).
        tau: shared per-component standard deviation (isotropic). The shared
            scalar is what makes the posterior mean closed-form.
        weights: component probabilities, shape (K,), summing to 1.
        prompt_of_component: prompt id for each component.
    """

    means: np.ndarray
    tau: float
    weights: np.ndarray
    prompt_of_component: tuple[str, ...]

    def __post_init__(self):
        if self.means.ndim != 2 or len(self.means) < 2:
            raise ValueError("need at least 2 components")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12 or np.any(self.weights <= 0):
            raise ValueError("weights must be positive and sum to 1")
        if len(self.prompt_of_component) != len(self.means):
            raise ValueError("one prompt id per component")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def num_components(self) -> int:
        return self.means.shape[0]


@dataclass(frozen=True)
class PromptSpec:
    """A prompt: an id plus the target magnitude profile it asks for."""

    prompt_id: str
    target_spectrum: np.ndarray
    component_index: int


class Decoder:
    """Linear latent-to-waveform decoder.

    The first num_signal_dims latent coordinates drive unit-amplitude sinusoids
    at fixed frequencies; the remaining coordinates drive fixed pseudorandom
    noise waveforms. Decoding is linear, so waveform-space energy accounting
    reduces to coefficient-space accounting against the basis columns.

    Args:
        frequencies: tone frequencies in Hz, one per signal dim, each below
            sample_rate / 2.
        noise_bases: fixed noise waveforms, shape (num_noise_dims, num_samples),
            each normalized to the energy of a unit-amplitude sine
            (num_samples / 2).
        sample_rate: waveform sample rate in Hz.
        num_samples: waveform length.
        basis_seed: seed the noise bases were generated from, recorded so a
            task document can reproduce them.
    """

    def __init__(self, frequencies, noise_bases, sample_rate, num_samples, basis_seed):
        frequencies = np.asarray(frequencies, dtype=float)
        noise_bases = np.asarray(noise_bases, dtype=float)
        if len(set(frequencies.tolist())) != len(frequencies):
            raise ValueError("frequencies must be distinct")
        if np.any(frequencies >= sample_rate / 2):
            raise ValueError("frequencies must sit below Nyquist")
        if noise_bases.shape[1] != num_samples:
            raise ValueError("noise basis length must equal num_samples")
        self.frequencies = frequencies
        self.noise_bases = noise_bases
        self.sample_rate = int(sample_rate)
        self.num_samples = int(num_samples)
        self.basis_seed = int(basis_seed)
        n = np.arange(num_samples)
        tones = np.sin(2.0 * np.pi * frequencies[:, None] * n[None, :] / sample_rate)
        self._basis = np.vstack([tones, noise_bases]).T  # (num_samples, d)
        self._pinv = np.linalg.pinv(self._basis)
        self._col_energy = (self._basis**2).sum(axis=0)
        for arr in (self.frequencies, self.noise_bases, self._basis, self._pinv, self._col_energy):
            arr.setflags(write=False)

    @property
    def num_signal_dims(self) -> int:
        return len(self.frequencies)

    @property
    def num_noise_dims(self) -> int:
        return len(self.noise_bases)

    @property
    def dim(self) -> int:
        return self.num_signal_dims + self.num_noise_dims


@dataclass(frozen=True)
class Task:
    """The benchmark bundle: prior, decoder, prompt catalog, and the seed used."""

    prior: MixturePrior
    decoder: Decoder
    prompts: tuple[PromptSpec, ...]
    seed: int

    def prompt_by_id(self, prompt_id: str) -> PromptSpec:
        for p in self.prompts:
            if p.prompt_id == prompt_id:
                return p
        raise KeyError(f"unknown prompt id {prompt_id!r}")


def make_stream(master_seed: int, index: int, generation: int) -> np.random.Generator:
    """Deterministic per-candidate random stream.

    The (master_seed, index, generation) entropy triple gives every candidate
    slot an independent stream whose draws never depend on population size,
    which is what makes nested Best-of-N pools exact prefixes of each other.
    """
    return np.random.default_rng(
        np.random.SeedSequence(entropy=[int(master_seed), int(index), int(generation)])
    )


def sample_prior(prior: MixturePrior, rng: np.random.Generator):
    """Draw (latent, component index) from the mixture."""
    comp = int(rng.choice(prior.num_components, p=prior.weights))
    latent = prior.means[comp] + prior.tau * rng.standard_normal(prior.dim)
    return latent, comp


def _noised_component_stats(t: int, prior: MixturePrior, sched: Schedule):
    ab = float(sched.alpha_bars[t])
    marginal_var = ab * prior.tau**2 + (1.0 - ab)
    return ab, marginal_var


def _responsibilities(x_t: np.ndarray, t: int, prior: MixturePrior, sched: Schedule):
    """Posterior component probabilities given a noised latent, shape (n, K)."""
    ab, var = _noised_component_stats(t, prior, sched)
    diff = x_t[:, None, :] - np.sqrt(ab) * prior.means[None, :, :]
    log_r = np.log(prior.weights)[None, :] - (diff**2).sum(axis=2) / (2.0 * var)
    log_r -= log_r.max(axis=1, keepdims=True)
    r = np.exp(log_r)
    r /= r.sum(axis=1, keepdims=True)
    return r, diff, ab, var


def posterior_x0_mean(x_t: np.ndarray, t: int, prior: MixturePrior, sched: Schedule) -> np.ndarray:
    """Exact E[x0 | x_t] for the isotropic Gaussian mixture prior.

    Each component contributes its conjugate update
    m_k + (sqrt(abar_t) * tau^2 / (abar_t * tau^2 + 1 - abar_t)) * (x_t - sqrt(abar_t) * m_k),
    weighted by its responsibility. Responsibilities are normalized in log
    space. Accepts a single latent (d,) or a batch (n, d).
    """
    if not 0 <= t < sched.num_steps:
        raise ValueError(f"timestep {t} outside [0, {sched.num_steps})")
    x = np.asarray(x_t, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    r, diff, ab, var = _responsibilities(x, t, prior, sched)
    gain = np.sqrt(ab) * prior.tau**2 / var
    per_component = prior.means[None, :, :] + gain * diff
    out = (r[:, :, None] * per_component).sum(axis=1)
    return out[0] if single else out


def sample_posterior(
    x_t: np.ndarray, t: int, prior: MixturePrior, sched: Schedule, rng: np.random.Generator
) -> np.ndarray:
    """Exact draw from p(x0 | x_t): component by responsibility, then the conjugate Gaussian."""
    x = np.asarray(x_t, dtype=float)[None, :]
    r, diff, ab, var = _responsibilities(x, t, prior, sched)
    comp = int(rng.choice(prior.num_components, p=r[0]))
    gain = np.sqrt(ab) * prior.tau**2 / var
    mean = prior.means[comp] + gain * diff[0, comp]
    post_var = prior.tau**2 * (1.0 - ab) / var
    return mean + np.sqrt(post_var) * rng.standard_normal(prior.dim)


def reverse_sample(x_init: np.ndarray, prior: MixturePrior, sched: Schedule) -> np.ndarray:
    """Full deterministic reverse pass from t = T-1 noise to a clean estimate.

    Runs T-1 ddim steps, each fed by the closed-form posterior mean, then one
    final posterior-mean evaluation at t = 0: exactly T denoiser calls.
    Accepts a single latent or a batch.
    """
    x = np.asarray(x_init, dtype=float)
    for t in range(sched.num_steps - 1, 0, -1):
        x0_hat = posterior_x0_mean(x, t, prior, sched)
        x = ddim_step(x, x0_hat, t, t - 1, sched)
    return posterior_x0_mean(x, 0, prior, sched)


def decode_waveform(latent: np.ndarray, dec: Decoder) -> np.ndarray:
    """Decode a latent (d,) or batch (n, d) to waveforms."""
    latent = np.asarray(latent, dtype=float)
    if latent.shape[-1] != dec.dim:
        raise ValueError(f"latent dim {latent.shape[-1]} does not match decoder dim {dec.dim}")
    return latent @ dec._basis.T


def _build_noise_bases(rng: np.random.Generator, frequencies: np.ndarray, num_samples: int,
                       sample_rate: int, tone_fraction: float) -> np.ndarray:
    """Noise basis j mixes cosines at frequencies j and j+SIGNAL/2 with white noise.

    Cosines are quadrature to the sine signal basis, so a noise basis adds DFT
    magnitude at tone bins in quadrature rather than linearly. That keeps the
    alignment reward nearly flat in a component's own-noise level while the
    quality reward strictly falls, decorrelating the two rewards.
    """
    n = np.arange(num_samples)
    bases = np.zeros((NOISE_DIMS, num_samples))
    for j in range(NOISE_DIMS):
        w1, w2 = rng.standard_normal(2)
        quad = w1 * np.cos(2.0 * np.pi * frequencies[j] * n / sample_rate) + w2 * np.cos(
            2.0 * np.pi * frequencies[j + NOISE_DIMS] * n / sample_rate
        )
        white = rng.standard_normal(num_samples)
        b = np.sqrt(tone_fraction) * quad / np.linalg.norm(quad)
        b += np.sqrt(1.0 - tone_fraction) * white / np.linalg.norm(white)
        bases[j] = b * np.sqrt(num_samples / 2.0) / np.linalg.norm(b)
    return bases


def build_default_task(seed: int = 0) -> Task:
    """Construct the shipped benchmark task.

    Component k's tone mean puts a shared base amplitude on all signal dims
    plus a boost on the frequency pair {k, k+4}, norm-equalized so every mean
    has squared norm MEAN_SQ_NORM; its noise-dim mean grows with k. Components
    with higher k therefore emit more broadband noise, and chasing alignment
    alone drifts toward noisier components: the alignment-vs-quality tension
    the guidance schemes are evaluated on.
    """
    rng = np.random.default_rng(seed)
    frequencies = BASE_FREQ_HZ * np.arange(1, SIGNAL_DIMS + 1)
    noise_bases = _build_noise_bases(
        rng, frequencies, NUM_SAMPLES, SAMPLE_RATE, NOISE_BASIS_TONE_FRACTION
    )
    dec = Decoder(frequencies, noise_bases, SAMPLE_RATE, NUM_SAMPLES, basis_seed=seed)

    dim = SIGNAL_DIMS + NOISE_DIMS
    means = np.zeros((NUM_COMPONENTS, dim))
    for k in range(NUM_COMPONENTS):
        q = NOISE_MEAN_BASE + NOISE_MEAN_STEP * k
        # solve 2 s^2 + 4 b s + (8 b^2 + q^2 - MEAN_SQ_NORM) = 0 for the pair boost
        b = TONE_BASE_AMP
        disc = 4.0 * b * b - 2.0 * (SIGNAL_DIMS * b * b + q * q - MEAN_SQ_NORM)
        s = (-2.0 * b + np.sqrt(disc)) / 2.0
        means[k, :SIGNAL_DIMS] = b
        means[k, k] += s
        means[k, k + NOISE_DIMS] += s
        means[k, SIGNAL_DIMS + k] = q
    means.setflags(write=False)
    weights = np.full(NUM_COMPONENTS, 1.0 / NUM_COMPONENTS)
    weights.setflags(write=False)

    prompts = []
    prompt_ids = []
    for k in range(NUM_COMPONENTS):
        signal_only = means[k].copy()
        signal_only[SIGNAL_DIMS:] = 0.0
        mag = np.abs(np.fft.rfft(decode_waveform(signal_only, dec)))
        target = mag / np.linalg.norm(mag)
        target.setflags(write=False)
        pid = f"tones-{int(frequencies[k])}-{int(frequencies[k + NOISE_DIMS])}"
        prompt_ids.append(pid)
        prompts.append(PromptSpec(prompt_id=pid, target_spectrum=target, component_index=k))

    prior = MixturePrior(
        means=means, tau=TAU, weights=weights, prompt_of_component=tuple(prompt_ids)
    )
    return Task(prior=prior, decoder=dec, prompts=tuple(prompts), seed=seed)


def task_to_json(task: Task) -> str:
    """Serialize a task to a reproducible JSON document.

    Prompt target spectra are included verbatim so external reward workers can
    score alignment without reconstructing the decoder.
    """
    doc = {
        "format": "toneseek-task-v1",
        "seed": task.seed,
        "tau": task.prior.tau,
        "weights": task.prior.weights.tolist(),
        "means": task.prior.means.tolist(),
        "sample_rate": task.decoder.sample_rate,
        "num_samples": task.decoder.num_samples,
        "frequencies": task.decoder.frequencies.tolist(),
        "noise_basis_seed": task.decoder.basis_seed,
        "noise_tone_fraction": NOISE_BASIS_TONE_FRACTION,
        "prompts": [
            {
                "prompt_id": p.prompt_id,
                "component_index": p.component_index,
                "target_spectrum": p.target_spectrum.tolist(),
            }
            for p in task.prompts
        ],
    }
    return json.dumps(doc, sort_keys=True)


def task_from_json(text: str) -> Task:
    doc = json.loads(text)
    if doc.get("format") != "toneseek-task-v1":
        raise ValueError(f"unsupported task format {doc.get('format')!r}")
    frequencies = np.asarray(doc["frequencies"], dtype=float)
    rng = np.random.default_rng(doc["noise_basis_seed"])
    noise_bases = _build_noise_bases(
        rng, frequencies, doc["num_samples"], doc["sample_rate"], doc["noise_tone_fraction"]
    )
    dec = Decoder(
        frequencies, noise_bases, doc["sample_rate"], doc["num_samples"], doc["noise_basis_seed"]
    )
    prompts = []
    for p in doc["prompts"]:
        target = np.asarray(p["target_spectrum"], dtype=float)
        target.setflags(write=False)
        prompts.append(
            PromptSpec(
                prompt_id=p["prompt_id"],
                target_spectrum=target,
                component_index=p["component_index"],
            )
        )
    means = np.asarray(doc["means"], dtype=float)
    means.setflags(write=False)
    weights = np.asarray(doc["weights"], dtype=float)
    weights.setflags(write=False)
    prior = MixturePrior(
        means=means,
        tau=float(doc["tau"]),
        weights=weights,
        prompt_of_component=tuple(p.prompt_id for p in prompts),
    )
    return Task(prior=prior, decoder=dec, prompts=tuple(prompts), seed=int(doc["seed"]))


def task_fingerprint(task: Task) -> str:
    """Stable hash identifying a task; calibration stats are only valid against it."""
    return hashlib.sha256(task_to_json(task).encode()).hexdigest()
