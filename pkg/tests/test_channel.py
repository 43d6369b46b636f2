import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nomaisac.channel import (
    ArrayGeometry,
    ChannelSet,
    CorrelationSpec,
    LinkBudget,
    draw_rayleigh_channels,
    exponential_snr_draw,
    exponential_snr_draws,
    steering_matrix,
    steering_vector,
)
from nomaisac.errors import AngleOutOfRange, DimensionMismatch
from nomaisac.numerics import RngSeed


class TestSteering:
    def test_broadside(self):
        np.testing.assert_allclose(steering_vector(ArrayGeometry(4), 0.0), np.ones(4))

    def test_endfire_half_wavelength(self):
        np.testing.assert_allclose(steering_vector(ArrayGeometry(2), math.pi / 2), [1, -1],
                                   atol=1e-15)

    @given(st.integers(1, 16), st.floats(-math.pi / 2, math.pi / 2),
           st.floats(0.1, 2.0))
    def test_unit_modulus(self, m, theta, d):
        a = steering_vector(ArrayGeometry(m, d), theta)
        assert a.shape == (m,)
        np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)

    def test_matrix_rows(self):
        geo = ArrayGeometry(5)
        th = np.linspace(-1.2, 1.2, 7)
        A = steering_matrix(geo, th)
        for t, row in zip(th, A):
            np.testing.assert_allclose(row, steering_vector(geo, t), atol=1e-13)

    def test_out_of_range(self):
        with pytest.raises(AngleOutOfRange):
            steering_vector(ArrayGeometry(2), 2.0)


class TestRayleigh:
    def test_full_correlation_gives_identical_users(self):
        ch = draw_rayleigh_channels(ArrayGeometry(4), 3, CorrelationSpec(1.0), RngSeed(1))
        h = ch.user_channels
        np.testing.assert_array_equal(h[1], h[0])
        np.testing.assert_array_equal(h[2], h[0])

    def test_shape_and_readonly(self):
        ch = draw_rayleigh_channels(ArrayGeometry(3), 2, CorrelationSpec(0.3), RngSeed(1))
        assert ch.user_channels.shape == (2, 3)
        assert (ch.num_users, ch.num_antennas) == (2, 3)
        with pytest.raises(ValueError):
            ch.user_channels[0, 0] = 0

    def test_trial_determinism(self):
        args = (ArrayGeometry(2), 3, CorrelationSpec(0.5), RngSeed(9))
        a = draw_rayleigh_channels(*args, trial=4).user_channels
        draw_rayleigh_channels(*args, trial=3)
        b = draw_rayleigh_channels(*args, trial=4).user_channels
        np.testing.assert_array_equal(a, b)
        c = draw_rayleigh_channels(*args, trial=5).user_channels
        assert not np.array_equal(a, c)

    def test_second_moments(self):
        # E|h_k|^2 = 1 per entry and E[h_0 conj(h_1)] = rho
        rho, n = 0.6, 20_000
        geo, seed = ArrayGeometry(1), RngSeed(77)
        h = np.array([draw_rayleigh_channels(geo, 2, CorrelationSpec(rho), seed, t)
                      .user_channels[:, 0] for t in range(n)])
        tol = 4 / math.sqrt(n)
        np.testing.assert_allclose(np.mean(np.abs(h) ** 2, axis=0), [1, 1], atol=2 * tol)
        assert abs(np.mean(h[:, 0].conj() * h[:, 1]) - rho) < 2 * tol

    def test_rejects_bad_shape(self):
        with pytest.raises(DimensionMismatch):
            ChannelSet(np.zeros((2, 2, 2)))


class TestExponentialSnr:
    def test_mean(self):
        g = exponential_snr_draws(2.5, np.arange(200_000), RngSeed(3))
        assert g.min() >= 0
        assert abs(g.mean() - 2.5) < 4 * 2.5 / math.sqrt(2e5)

    def test_scalar_matches_vector(self):
        seed = RngSeed(3)
        v = exponential_snr_draws(1.0, np.arange(5), seed)
        assert [exponential_snr_draw(1.0, t, seed) for t in range(5)] == list(v)

    def test_invalid_mean(self):
        with pytest.raises(ValueError):
            exponential_snr_draws(0.0, [0], RngSeed(0))


def test_link_budget_validation():
    with pytest.raises(ValueError):
        LinkBudget(rho_resid=1.5)
    with pytest.raises(ValueError):
        LinkBudget(gamma_c=-1)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 1000))
def test_correlation_range_draws_finite(rho, trial):
    ch = draw_rayleigh_channels(ArrayGeometry(2), 3, CorrelationSpec(rho), RngSeed(0), trial)
    assert np.all(np.isfinite(ch.user_channels))
