import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import lattice_disc_count, naive_dft2
from orbit_llie.errors import ContractError
from orbit_llie.spectral import (
    DEFAULT_LAMBDA,
    fag,
    fag_gray,
    fag_terms,
    fft2d,
    highpass_mask,
    ifft2d,
    nyquist_radius,
)


def test_constant_image_has_only_dc():
    s = fft2d(np.full((8, 16), 0.3))
    assert s[0, 0] == pytest.approx(0.3 * 128)
    rest = s.copy()
    rest[0, 0] = 0
    assert np.abs(rest).max() == 0.0


def test_impulse_has_flat_magnitude():
    x = np.zeros((16, 16))
    x[3, 5] = 1.0
    np.testing.assert_allclose(np.abs(fft2d(x)), 1.0, atol=1e-12)


def test_fft_matches_naive_dft():
    x = np.random.default_rng(0).random((16, 16))
    assert np.abs(fft2d(x) - naive_dft2(x)).max() <= 1e-9


def test_fft_non_square_and_batched():
    x = np.random.default_rng(1).random((3, 4, 8))
    got = fft2d(x)
    for k in range(3):
        assert np.abs(got[k] - naive_dft2(x[k])).max() <= 1e-9


def test_round_trip_and_parseval():
    x = np.random.default_rng(2).standard_normal((32, 16))
    s = fft2d(x)
    back = ifft2d(s)
    assert np.abs(back - x).max() <= 1e-9
    assert np.abs(back.imag).max() <= 1e-9
    energy = np.sum(x**2)
    assert abs(np.sum(np.abs(s) ** 2) / x.size - energy) / energy <= 1e-9


def test_non_power_of_two_rejected():
    with pytest.raises(ContractError):
        fft2d(np.zeros((12, 16)))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.random((8, 8)), rng.random((8, 8))
    lhs = fft2d(a * x + b * y)
    rhs = a * fft2d(x) + b * fft2d(y)
    assert np.abs(lhs - rhs).max() <= 1e-9


def test_mask_cutoff_zero_is_all_pass_but_dc():
    m = highpass_mask(16, 8, 0.0)
    assert m[0, 0] == 0.0 and m.sum() == 16 * 8 - 1


def test_mask_beyond_nyquist_is_all_stop():
    assert highpass_mask(16, 16, nyquist_radius(16, 16)).sum() == 0


def test_mask_cutoff_20_disc():
    m = highpass_mask(256, 256, 20.0)
    expected = lattice_disc_count(20.0)
    assert expected == 1257
    assert (m == 0).sum() == expected


def test_fag_black_is_one():
    g = fag(np.zeros((32, 32, 3)))
    assert np.array_equal(g, np.ones((32, 32)))


@pytest.mark.parametrize("c", [0.0, 0.1, 0.45, 0.8, 1.0])
@pytest.mark.parametrize("lam", [DEFAULT_LAMBDA, 0.9, 2.0])
def test_fag_constant_image(c, lam):
    g = fag(np.full((16, 16, 3), c), lam=lam)
    np.testing.assert_allclose(g, np.clip(1 - lam * math.sqrt(3) * c, 0, 1), rtol=0, atol=1e-12)


def test_fag_constant_gray_default_lambda():
    g = fag_gray(np.full((8, 8), 0.35))
    np.testing.assert_allclose(g, 0.65, atol=1e-12)


def test_checkerboard_passes_highpass():
    yy, xx = np.mgrid[0:32, 0:32]
    board = 0.2 * ((yy + xx) % 2)
    rgb = np.repeat(board[..., None], 3, axis=2)
    _, term2 = fag_terms(rgb.sum(axis=2), board, cutoff=20.0)
    zero_mean = board - board.mean()
    assert np.abs(term2 - zero_mean).max() <= 1e-12
    # the same through the naive DFT
    mask = highpass_mask(32, 32, 20.0 * 32 / 256)
    ref = np.real(np.conj(naive_dft2(np.conj(mask * naive_dft2(board)))) / board.size)
    assert np.abs(term2 - ref).max() <= 1e-9


def test_fag_bounded_and_deterministic():
    img = np.random.default_rng(0).random((32, 32, 3)) * 0.3
    a, b = fag(img), fag(img)
    assert a.tobytes() == b.tobytes()
    assert a.min() >= 0.0 and a.max() <= 1.0 and a.shape == (32, 32)


def test_darker_image_has_larger_term1_mean():
    base = np.random.default_rng(0).random((16, 16, 3))
    means = []
    for gain in (0.1, 0.3, 0.6, 0.9):
        t1, _ = fag_terms((gain * base).sum(axis=2), (gain * base).mean(axis=2))
        means.append(t1.mean())
    assert all(x > y for x, y in zip(means, means[1:]))


def test_term1_translation_covariant():
    img = np.random.default_rng(3).random((16, 16, 3))
    t1, _ = fag_terms(img.sum(axis=2), img.mean(axis=2))
    shifted = np.roll(img, (3, 5), axis=(0, 1))
    s1, _ = fag_terms(shifted.sum(axis=2), shifted.mean(axis=2))
    assert np.array_equal(s1, np.roll(t1, (3, 5), axis=(0, 1)))


def test_fag_rejects_bad_input():
    with pytest.raises(ContractError):
        fag(np.zeros((16, 16)))
    with pytest.raises(ContractError):
        fag(np.zeros((16, 16, 3)), lam=0.0)
    with pytest.raises(ContractError):
        fag_terms(np.zeros((8, 8)), np.zeros((8, 4)))


def test_fag_gray_batch_matches_single():
    g = np.random.default_rng(4).random((3, 16, 16))
    batch = fag_gray(g)
    for k in range(3):
        np.testing.assert_allclose(batch[k], fag(np.repeat(g[k][..., None], 3, axis=2)), atol=1e-12)
