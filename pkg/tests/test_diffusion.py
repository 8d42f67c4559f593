import math

import numpy as np
import pytest

from orbit_llie.diffusion import (
    compose_steps,
    cosine_schedule,
    forward_diffuse,
    loss,
    posterior_coefficients,
    posterior_params,
    predicted_clean,
    predicted_mean,
    reverse_step,
    sample,
    to_signed,
)
from orbit_llie.errors import ContractError, DimensionError
from orbit_llie.gradcheck import check_gradients
from orbit_llie.ops import conv2d
from orbit_llie.tensor import Tensor, add_channel

SCHED = cosine_schedule(2000, 0.008)


def within_standard_errors(samples, mean, var, k=4.0):
    """Sample mean/variance agree with (mean, var) within k standard errors."""
    n = samples.shape[0]
    m_hat = samples.mean(axis=0)
    v_hat = samples.var(axis=0, ddof=1)
    mean_ok = np.abs(m_hat - mean) <= k * np.sqrt(var / n)
    var_ok = np.abs(v_hat - var) <= k * var * math.sqrt(2.0 / (n - 1))
    return bool(mean_ok.all() and var_ok.all())


def oracle_net(h0_signed):
    def net(l, ht, gamma_t):
        g = np.asarray(gamma_t).reshape((-1,) + (1,) * (np.ndim(ht) - 1)) if np.ndim(ht) == 4 else gamma_t[0]
        return (ht - np.sqrt(g) * h0_signed) / np.sqrt(1.0 - g)

    return net


# -- schedule ---------------------------------------------------------------

def test_schedule_boundary_and_monotone():
    assert SCHED.gamma[0] == 1.0
    assert np.all(np.diff(SCHED.gamma) < 0)
    assert SCHED.gamma[-1] < 1e-3
    assert np.all(SCHED.beta[1:] > 0) and np.all(SCHED.beta[1:] <= 0.999)
    assert 0 < SCHED.beta[1] < 1


def test_gamma_is_exact_running_product():
    for t in range(1, SCHED.T + 1):
        assert SCHED.gamma[t] == SCHED.alpha[t] * SCHED.gamma[t - 1]


def test_gamma_follows_cosine_ratio_before_clip():
    t = np.arange(SCHED.T + 1)
    f = np.cos(((t / 2000 + 0.008) / 1.008) * math.pi / 2) ** 2
    unclipped = SCHED.beta < 0.999
    np.testing.assert_allclose(SCHED.gamma[unclipped], (f / f[0])[unclipped], rtol=1e-9)
    # only the tail is clipped
    assert unclipped[: SCHED.T - 1].all()


def test_schedule_rejects_bad_args():
    with pytest.raises(ContractError):
        cosine_schedule(0)
    with pytest.raises(ContractError):
        cosine_schedule(10, offset=0.0)


# -- forward process --------------------------------------------------------

def test_forward_zero_signal():
    eps = np.random.default_rng(0).standard_normal((4, 4))
    np.testing.assert_array_equal(forward_diffuse(np.zeros((4, 4)), 500, eps, SCHED), np.sqrt(1 - SCHED.gamma[500]) * eps)


def test_forward_first_step_near_identity():
    rng = np.random.default_rng(1)
    h0, eps = rng.random((8, 8)), rng.standard_normal((8, 8))
    assert np.abs(forward_diffuse(h0, 1, eps, SCHED) - h0).max() < 0.02


def test_forward_range_and_shape_checks():
    with pytest.raises(ContractError):
        forward_diffuse(np.zeros(3), 0, np.zeros(3), SCHED)
    with pytest.raises(ContractError):
        forward_diffuse(np.zeros(3), 2001, np.zeros(3), SCHED)
    with pytest.raises(DimensionError):
        forward_diffuse(np.zeros(3), 5, np.zeros(4), SCHED)


def test_forward_per_sample_steps():
    rng = np.random.default_rng(2)
    h0, eps = rng.random((3, 1, 2, 2)), rng.standard_normal((3, 1, 2, 2))
    t = np.array([1, 700, 2000])
    out = forward_diffuse(h0, t, eps, SCHED)
    for k in range(3):
        np.testing.assert_array_equal(out[k], forward_diffuse(h0[k], int(t[k]), eps[k], SCHED))


@pytest.mark.parametrize("t", [10, 1000, 2000])
def test_closed_form_moments(t):
    rng = np.random.default_rng(t)
    h0 = np.array([0.8, -0.4, 0.1])
    draws = forward_diffuse(np.broadcast_to(h0, (10_000, 3)), t, rng.standard_normal((10_000, 3)), SCHED)
    assert within_standard_errors(draws, math.sqrt(SCHED.gamma[t]) * h0, 1 - SCHED.gamma[t])


def test_compose_reproducible_and_single_step():
    h0 = np.array([0.3, -0.2])
    a = compose_steps(h0, 50, SCHED, np.random.default_rng(5))
    b = compose_steps(h0, 50, SCHED, np.random.default_rng(5))
    assert a.tobytes() == b.tobytes()
    # one composed step is the closed form with the same noise draw
    z = np.random.default_rng(6).standard_normal(2)
    one = compose_steps(h0, 1, SCHED, np.random.default_rng(6))
    np.testing.assert_allclose(one, forward_diffuse(h0, 1, z, SCHED), rtol=0, atol=1e-15)


# -- posterior --------------------------------------------------------------

def test_posterior_at_t1_collapses_to_h0():
    rng = np.random.default_rng(0)
    h0, ht = rng.random(5), rng.random(5)
    mu, var = posterior_params(h0, ht, 1, SCHED)
    assert var == 0.0
    np.testing.assert_array_equal(mu, h0)


def test_posterior_zero_inputs():
    mu, _ = posterior_params(np.zeros(3), np.zeros(3), 100, SCHED)
    assert not mu.any()


def test_posterior_rejects_t0():
    with pytest.raises(ContractError):
        posterior_params(np.zeros(2), np.zeros(2), 0, SCHED)


@pytest.mark.parametrize("t", [2, 10, 500, 1999, 2000])
def test_posterior_coefficients_on_noiseless_relation(t):
    h0 = np.array([0.25, -0.7])
    ht = math.sqrt(SCHED.gamma[t]) * h0
    mu, _ = posterior_params(h0, ht, t, SCHED)
    np.testing.assert_allclose(mu, ht / math.sqrt(SCHED.alpha[t]), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(mu, math.sqrt(SCHED.gamma[t - 1]) * h0, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("t", [5, 1000, 2000])
def test_posterior_marginalizes_to_previous_marginal(t):
    rng = np.random.default_rng(100 + t)
    h0 = np.array([0.6, -0.1])
    n = 10_000
    ht = forward_diffuse(np.broadcast_to(h0, (n, 2)), t, rng.standard_normal((n, 2)), SCHED)
    mu, var = posterior_params(h0, ht, t, SCHED)
    prev = mu + math.sqrt(var) * rng.standard_normal((n, 2))
    assert within_standard_errors(prev, math.sqrt(SCHED.gamma[t - 1]) * h0, 1 - SCHED.gamma[t - 1])


# -- reverse process --------------------------------------------------------

@pytest.mark.parametrize("t", [2, 50, 1500, 2000])
def test_reverse_mean_with_true_noise_equals_posterior_mean(t):
    rng = np.random.default_rng(t)
    h0 = rng.uniform(-1, 1, (1, 1, 4, 4))
    eps = rng.standard_normal(h0.shape)
    ht = forward_diffuse(h0, t, eps, SCHED)
    mu_tilde, _ = posterior_params(h0, ht, t, SCHED)
    np.testing.assert_allclose(predicted_mean(ht, eps, t, SCHED), mu_tilde, rtol=0, atol=1e-10)


def test_reverse_step_zero_net():
    ht = np.random.default_rng(0).standard_normal((1, 1, 4, 4))
    out = reverse_step(None, ht, 1, SCHED, lambda l, h, g: np.zeros_like(h))
    np.testing.assert_allclose(out, ht / math.sqrt(SCHED.alpha[1]), rtol=1e-15)


def test_final_step_is_deterministic():
    ht = np.ones((1, 1, 2, 2))
    net = lambda l, h, g: 0.5 * h  # noqa: E731
    a = reverse_step(None, ht, 1, SCHED, net, np.random.default_rng(0))
    b = reverse_step(None, ht, 1, SCHED, net, np.random.default_rng(1))
    assert a.tobytes() == b.tobytes()


def test_reverse_step_shape_mismatch():
    with pytest.raises(DimensionError):
        reverse_step(None, np.zeros((1, 1, 4, 4)), 3, SCHED, lambda l, h, g: np.zeros((1, 1, 2, 2)), np.random.default_rng(0))


def test_sampler_recovers_h0_with_oracle_noise():
    rng = np.random.default_rng(7)
    img = rng.random((2, 1, 8, 8))
    out = sample(np.zeros_like(img), SCHED, oracle_net(to_signed(img)), np.random.default_rng(3))
    assert out.shape == img.shape
    assert np.abs(out - img).mean() <= 2 / 255


def test_sampler_reproducible():
    net = lambda l, h, g: 0.1 * h  # noqa: E731
    sched = cosine_schedule(50)
    a = sample(np.zeros((1, 1, 4, 4)), sched, net, np.random.default_rng(11))
    b = sample(np.zeros((1, 1, 4, 4)), sched, net, np.random.default_rng(11))
    assert a.tobytes() == b.tobytes()
    assert a.min() >= 0 and a.max() <= 1


# -- loss -------------------------------------------------------------------

def test_loss_zero_for_oracle():
    rng = np.random.default_rng(0)
    img = rng.random((2, 1, 4, 4))
    t = np.array([3, 1500])
    eps = rng.standard_normal(img.shape)
    h0 = to_signed(img)

    def net(l, ht, gamma_t):
        g = gamma_t[:, None, None, None]
        return Tensor((ht.data - np.sqrt(g) * h0) / np.sqrt(1 - g))

    assert loss(net, img, img, SCHED, rng, t=t, eps=eps).item() == pytest.approx(0.0, abs=1e-20)


def test_loss_zero_net_is_noise_energy():
    rng = np.random.default_rng(1)
    img = rng.random((4, 1, 8, 8))
    eps = rng.standard_normal(img.shape)
    val = loss(lambda l, h, g: Tensor(np.zeros(h.shape)), img, img, SCHED, rng, eps=eps).item()
    assert val == pytest.approx(np.mean(eps**2), rel=1e-14)
    many = [loss(lambda l, h, g: Tensor(np.zeros(h.shape)), img, img, SCHED, rng).item() for _ in range(200)]
    assert abs(np.mean(many) - 1.0) < 0.02


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    k = Tensor(rng.standard_normal((1, 1, 3, 3)) * 0.3, requires_grad=True)
    b = Tensor(rng.standard_normal(1) * 0.1, requires_grad=True)
    img = rng.random((2, 1, 6, 6))
    t, eps = np.array([40, 900]), rng.standard_normal(img.shape)

    def net(l, ht, g):
        return add_channel(conv2d(ht, k, padding=1), b)

    rows = check_gradients(lambda: loss(net, img, img, SCHED, None, t=t, eps=eps), [k, b])
    assert max(r[4] for r in rows) <= 1e-5


def test_clipped_step_matches_plain_step_when_nothing_clips():
    sched = cosine_schedule(100)
    rng = np.random.default_rng(11)
    h0 = rng.uniform(-0.9, 0.9, (2, 1, 4, 4))
    eps = rng.standard_normal(h0.shape)
    for t in (1, 2, 50, 100):
        ht = forward_diffuse(h0, np.full(2, t), eps, sched)
        oracle = lambda l, h, g: eps  # noqa: E731
        plain = reverse_step(h0, ht, t, sched, oracle, np.random.default_rng(0))
        clipped = reverse_step(h0, ht, t, sched, oracle, np.random.default_rng(0), clip_range=(-1.0, 1.0))
        np.testing.assert_allclose(clipped, plain, atol=1e-9)
        np.testing.assert_allclose(predicted_clean(ht, eps, t, sched), h0, atol=1e-9)


def test_clipped_step_bounds_the_clean_estimate():
    sched = cosine_schedule(100)
    ht = np.zeros((1, 1, 4, 4))
    wild = lambda l, h, g: np.full(h.shape, -50.0)  # noqa: E731
    mu = reverse_step(ht, ht, 2, sched, wild, np.random.default_rng(0), clip_range=(-1.0, 1.0))
    c_t, c_0, var = posterior_coefficients(2, sched)
    # h0 estimate clips to +1, so the mean is c_0 plus the added noise
    z = np.random.default_rng(0).standard_normal(ht.shape)
    np.testing.assert_allclose(mu, c_0 + math.sqrt(var) * z, atol=1e-12)
