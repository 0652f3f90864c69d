import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionlab.errors import DataError
from motionlab.rate_model import RateGP, fit_rate_gp, gp_posterior, rate_band, squared_exponential


def toy(seed, n=15):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(size=n))
    return t, np.sin(6 * t) * 0.3 + rng.normal(size=n) * 0.05


class TestPosterior:
    def test_noise_free_interpolation(self):
        t, r = toy(0)
        gp = RateGP(t, r, 1.0, 0.05, 0.0)
        assert gp.jitter == 0.0
        mean, var = gp.posterior(t)
        np.testing.assert_allclose(mean, r, atol=1e-6)
        assert np.all(var <= 1e-8)

    def test_prior_reversion(self):
        gp = RateGP([0.0, 0.05], [1.0, -0.5], 0.7, 0.01, 1e-2)
        mean, var = gp_posterior(gp, 0.9)
        assert abs(mean) < 1e-6 and abs(var - 0.7) < 1e-6

    def test_two_point_hand_solved(self):
        a2, ell, s2 = 0.8, 0.3, 0.05
        t, r = np.array([0.2, 0.6]), np.array([0.4, -0.1])
        x = 0.45
        k = lambda u, v: a2 * np.exp(-0.5 * ((u - v) / ell) ** 2)
        k12 = k(0.2, 0.6)
        # explicit inverse of [[a2 + s2, k12], [k12, a2 + s2]]
        det = (a2 + s2) ** 2 - k12**2
        inv = np.array([[a2 + s2, -k12], [-k12, a2 + s2]]) / det
        q = np.array([k(x, 0.2), k(x, 0.6)])
        mean_expected = q @ inv @ r
        var_expected = a2 - q @ inv @ q
        mean, var = RateGP(t, r, a2, ell, s2).posterior(x)
        assert mean == pytest.approx(mean_expected, abs=1e-10)
        assert var == pytest.approx(var_expected, abs=1e-10)

    def test_duplicate_times_match_full_system(self):
        rng = np.random.default_rng(1)
        t = np.repeat(np.linspace(0, 1, 6), 4)
        r = rng.normal(size=len(t))
        grid = np.linspace(0, 1, 17)
        gp = RateGP(t, r, 0.5, 0.2, 0.1)
        K = squared_exponential(t, t, 0.5, 0.2) + 0.1 * np.eye(len(t))
        q = squared_exponential(grid, t, 0.5, 0.2)
        mean, var = gp.posterior(grid)
        np.testing.assert_allclose(mean, q @ np.linalg.solve(K, r), atol=1e-10)
        np.testing.assert_allclose(var, 0.5 - np.sum(q * np.linalg.solve(K, q.T).T, axis=1), atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_variance_below_prior(self, seed):
        t, r = toy(seed)
        gp = RateGP(t, r, 0.4, 0.1, 1e-3)
        _, var = gp.posterior(np.linspace(0, 1, 101))
        assert np.all(var <= 0.4 + 1e-10) and np.all(var >= 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_more_data_never_increases_variance(self, seed):
        t, r = toy(seed, 12)
        grid = np.linspace(0, 1, 101)
        _, v_small = RateGP(t[:-1], r[:-1], 0.4, 0.1, 1e-2).posterior(grid)
        _, v_full = RateGP(t, r, 0.4, 0.1, 1e-2).posterior(grid)
        assert np.all(v_full <= v_small + 1e-12)

    def test_singular_recovers_with_jitter(self):
        gp = RateGP([0.5, 0.5 + 1e-14], [0.1, 0.1], 1.0, 0.5, 0.0)
        assert gp.jitter > 0

    def test_invalid(self):
        with pytest.raises(DataError):
            RateGP([0.1], [0.2], -1.0)


class TestBand:
    def test_zero_width(self):
        t, r = toy(2)
        m, lo, hi = rate_band(RateGP(t, r), np.linspace(0, 1, 9), k=0.0)
        np.testing.assert_array_equal(m, lo)
        np.testing.assert_array_equal(m, hi)

    def test_tight_at_training_points(self):
        t, r = toy(3)
        _, lo, hi = rate_band(RateGP(t, r, 1.0, 0.05, 0.0), t, k=1.5)
        assert np.all(hi - lo <= 2 * 1.5 * 1e-4)

    def test_monotone_in_k(self):
        t, r = toy(4)
        gp = RateGP(t, r)
        grid = np.linspace(0, 1, 21)
        _, lo1, hi1 = rate_band(gp, grid, 1.0)
        _, lo2, hi2 = rate_band(gp, grid, 2.0)
        assert np.all(lo2 <= lo1) and np.all(hi2 >= hi1)


def test_grid_search_prefers_likely_lengthscale():
    rng = np.random.default_rng(5)
    t = np.repeat(np.linspace(0, 1, 40), 3)
    r = 0.3 * np.sin(2 * np.pi * t) + rng.normal(size=len(t)) * 0.05
    gp = fit_rate_gp(t, r, noise_var=0.05**2)
    assert 0.05 <= gp.lengthscale <= 0.4
