import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toneseek import toy
from toneseek.schedule import forward_noise, make_schedule


def importance_posterior_mean(x_t, t, prior, sched, num_draws, seed):
    """Monte Carlo E[x0 | x_t] by self-normalized importance sampling.

    Draws x0 from the prior and weights each draw by the forward-noising
    likelihood of x_t given it. Written against the model definition only, as
    an independent check on the closed-form denoiser.
    """
    rng = np.random.default_rng(seed)
    ab = float(sched.alpha_bars[t])
    num = np.zeros(prior.dim)
    den = 0.0
    sq_den = 0.0
    chunk = 200_000
    left = num_draws
    while left > 0:
        n = min(chunk, left)
        left -= n
        comps = rng.choice(prior.num_components, size=n, p=prior.weights)
        x0 = prior.means[comps] + prior.tau * rng.standard_normal((n, prior.dim))
        resid = x_t[None, :] - np.sqrt(ab) * x0
        logw = -(resid**2).sum(axis=1) / (2.0 * (1.0 - ab))
        logw -= logw.max()
        w = np.exp(logw)
        num += w @ x0
        den += w.sum()
        sq_den += (w**2).sum()
    ess = den**2 / sq_den
    return num / den, ess


def test_prior_validation():
    means = np.array([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        toy.MixturePrior(
            means=means,
            tau=0.1,
            weights=np.array([0.6, 0.5]),
            prompt_of_component=("a", "b"),
        )
    with pytest.raises(ValueError):
        toy.MixturePrior(
            means=means,
            tau=0.1,
            weights=np.array([0.5, 0.5]),
            prompt_of_component=("a",),
        )
    with pytest.raises(ValueError):
        toy.MixturePrior(
            means=means[:1],
            tau=0.1,
            weights=np.array([1.0]),
            prompt_of_component=("a",),
        )


def test_default_task_geometry(task):
    prior = task.prior
    assert prior.num_components == 4
    assert prior.dim == 12
    # every component mean carries the same total energy
    sq = (prior.means**2).sum(axis=1)
    assert np.allclose(sq, toy.MEAN_SQ_NORM, atol=1e-12)
    # noise-dim mean grows with the component index
    noise_levels = [prior.means[k, toy.SIGNAL_DIMS + k] for k in range(4)]
    assert noise_levels == sorted(noise_levels)
    assert noise_levels[0] > 0
    for k, p in enumerate(task.prompts):
        assert p.component_index == k
        assert prior.prompt_of_component[k] == p.prompt_id
        assert abs(np.linalg.norm(p.target_spectrum) - 1.0) < 1e-12
    assert len({p.prompt_id for p in task.prompts}) == 4


def test_prompt_ids_name_the_boosted_pair(task):
    assert task.prompts[0].prompt_id == "tones-250-1250"
    assert task.prompts[3].prompt_id == "tones-1000-2000"
    with pytest.raises(KeyError):
        task.prompt_by_id("tones-111-222")


def test_noise_basis_energy_matches_tones(task):
    dec = task.decoder
    energies = (dec._basis**2).sum(axis=0)
    # unit-amplitude sine over a full number of periods has energy N/2;
    # noise bases are normalized to the same so quality is balanced at equal coeffs
    assert np.allclose(energies, dec.num_samples / 2.0, rtol=1e-6)


def test_decoder_validation(task):
    dec = task.decoder
    with pytest.raises(ValueError):
        toy.Decoder([100.0, 100.0], dec.noise_bases, 16000, 4096, 0)
    with pytest.raises(ValueError):
        toy.Decoder([100.0, 9000.0], dec.noise_bases, 16000, 4096, 0)
    with pytest.raises(ValueError):
        toy.Decoder([100.0, 200.0, 300.0, 400.0], dec.noise_bases[:, :100], 16000, 4096, 0)


def test_decode_is_linear(task):
    rng = np.random.default_rng(5)
    a = rng.standard_normal(12)
    b = rng.standard_normal(12)
    dec = task.decoder
    left = toy.decode_waveform(a + 2.0 * b, dec)
    right = toy.decode_waveform(a, dec) + 2.0 * toy.decode_waveform(b, dec)
    assert np.allclose(left, right, atol=1e-12)
    # basis vector k decodes to basis column k
    e3 = np.zeros(12)
    e3[3] = 1.0
    assert np.array_equal(toy.decode_waveform(e3, dec), dec._basis[:, 3])


def test_decode_batch_matches_rows(task):
    rng = np.random.default_rng(6)
    lat = rng.standard_normal((5, 12))
    batch = toy.decode_waveform(lat, task.decoder)
    for i in range(5):
        # batched and single-row matmul may differ in the last ulp
        assert np.allclose(batch[i], toy.decode_waveform(lat[i], task.decoder), atol=1e-12)
    with pytest.raises(ValueError):
        toy.decode_waveform(lat[:, :7], task.decoder)


def test_make_stream_deterministic_and_distinct():
    a = toy.make_stream(9, 0, 0).standard_normal(8)
    b = toy.make_stream(9, 0, 0).standard_normal(8)
    c = toy.make_stream(9, 1, 0).standard_normal(8)
    d = toy.make_stream(9, 0, 1).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_sample_prior_component_frequencies(task):
    rng = np.random.default_rng(11)
    counts = np.zeros(4)
    for _ in range(4000):
        _, comp = toy.sample_prior(task.prior, rng)
        counts[comp] += 1
    # uniform weights; binomial std for 4000 draws is about 0.007
    assert np.all(np.abs(counts / 4000 - 0.25) < 0.03)


def test_sample_prior_latent_distribution(task):
    rng = np.random.default_rng(12)
    draws = {k: [] for k in range(4)}
    for _ in range(6000):
        lat, comp = toy.sample_prior(task.prior, rng)
        draws[comp].append(lat)
    for k, lats in draws.items():
        lats = np.asarray(lats)
        err = np.abs(lats.mean(axis=0) - task.prior.means[k])
        assert np.all(err < 4.0 * toy.TAU / np.sqrt(len(lats)) + 0.02)
        assert np.all(np.abs(lats.std(axis=0, ddof=1) - toy.TAU) < 0.02)


def test_posterior_mean_at_t0_tracks_observation(task, sched):
    # at t=0 almost no noise has been added, so E[x0 | x] stays close to x
    # for latents near the prior mass
    rng = np.random.default_rng(13)
    for _ in range(10):
        lat, _ = toy.sample_prior(task.prior, rng)
        x0 = forward_noise(lat, 0, rng.standard_normal(12), sched)
        est = toy.posterior_x0_mean(x0, 0, task.prior, sched)
        assert np.linalg.norm(est - x0) < 0.15


def test_posterior_mean_batch_matches_single(task, sched):
    rng = np.random.default_rng(14)
    x = rng.standard_normal((7, 12))
    for t in (3, 47, 99):
        batch = toy.posterior_x0_mean(x, t, task.prior, sched)
        for i in range(7):
            single = toy.posterior_x0_mean(x[i], t, task.prior, sched)
            assert np.allclose(batch[i], single, atol=1e-13)


def test_posterior_mean_against_importance_sampling(task, sched):
    rng = np.random.default_rng(15)
    for t in (50, 70, 90):
        lat, _ = toy.sample_prior(task.prior, rng)
        x_t = forward_noise(lat, t, rng.standard_normal(12), sched)
        closed = toy.posterior_x0_mean(x_t, t, task.prior, sched)
        mc, ess = importance_posterior_mean(x_t, t, task.prior, sched, 200_000, seed=t)
        assert ess > 10_000
        assert np.max(np.abs(closed - mc)) < 2e-2


def test_posterior_mean_rejects_bad_timestep(task, sched):
    x = np.zeros(12)
    with pytest.raises(ValueError):
        toy.posterior_x0_mean(x, -1, task.prior, sched)
    with pytest.raises(ValueError):
        toy.posterior_x0_mean(x, 100, task.prior, sched)


def test_sample_posterior_mean_agrees_with_closed_form(task, sched):
    rng = np.random.default_rng(16)
    lat, _ = toy.sample_prior(task.prior, rng)
    x_t = forward_noise(lat, 60, rng.standard_normal(12), sched)
    closed = toy.posterior_x0_mean(x_t, 60, task.prior, sched)
    draws = np.array([toy.sample_posterior(x_t, 60, task.prior, sched, rng) for _ in range(20_000)])
    assert np.max(np.abs(draws.mean(axis=0) - closed)) < 0.02


def test_reverse_sample_batch_matches_single(task, sched):
    rng = np.random.default_rng(17)
    init = rng.standard_normal((4, 12))
    batch = toy.reverse_sample(init, task.prior, sched)
    for i in range(4):
        single = toy.reverse_sample(init[i], task.prior, sched)
        assert np.allclose(batch[i], single, atol=1e-12)


def test_reverse_sample_commits_to_one_component(task, sched):
    # the deterministic reverse pass need not land exactly on a mean, but it
    # must end decisively closer to one component than to any other
    rng = np.random.default_rng(18)
    x0 = toy.reverse_sample(rng.standard_normal((64, 12)), task.prior, sched)
    d = np.sqrt(((x0[:, None, :] - task.prior.means[None, :, :]) ** 2).sum(axis=2))
    d_sorted = np.sort(d, axis=1)
    assert np.all(d_sorted[:, 0] < 1.0)
    assert np.all(d_sorted[:, 0] < 0.6 * d_sorted[:, 1])


def test_task_json_round_trip(task):
    text = toy.task_to_json(task)
    back = toy.task_from_json(text)
    assert np.array_equal(back.prior.means, task.prior.means)
    assert np.array_equal(back.decoder.noise_bases, task.decoder.noise_bases)
    assert back.prior.tau == task.prior.tau
    for p, q in zip(back.prompts, task.prompts):
        assert p.prompt_id == q.prompt_id
        assert np.array_equal(p.target_spectrum, q.target_spectrum)
    assert toy.task_fingerprint(back) == toy.task_fingerprint(task)


def test_task_json_rejects_unknown_format(task):
    doc = json.loads(toy.task_to_json(task))
    doc["format"] = "toneseek-task-v0"
    with pytest.raises(ValueError):
        toy.task_from_json(json.dumps(doc))


def test_fingerprint_distinguishes_tasks(task):
    other = toy.build_default_task(1)
    assert toy.task_fingerprint(other) != toy.task_fingerprint(task)
    again = toy.build_default_task(0)
    assert toy.task_fingerprint(again) == toy.task_fingerprint(task)


@settings(deadline=None, max_examples=25)
@given(t=st.integers(min_value=0, max_value=99), seed=st.integers(min_value=0, max_value=2**31))
def test_posterior_mean_is_convex_combination_of_updates(task, sched, t, seed):
    """E[x0 | x_t] lies in the convex hull of the per-component updates, so its
    distance to the farthest component mean is bounded by the farthest update."""
    rng = np.random.default_rng(seed)
    x_t = rng.standard_normal(12) * 2.0
    est = toy.posterior_x0_mean(x_t, t, task.prior, sched)
    ab = float(sched.alpha_bars[t])
    var = ab * task.prior.tau**2 + 1.0 - ab
    gain = np.sqrt(ab) * task.prior.tau**2 / var
    updates = task.prior.means + gain * (x_t[None, :] - np.sqrt(ab) * task.prior.means)
    lo = updates.min(axis=0) - 1e-9
    hi = updates.max(axis=0) + 1e-9
    assert np.all(est >= lo) and np.all(est <= hi)
