import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_posture
from motionlab.errors import DataError, RejectionStall, SingularCovariance
from motionlab.sphere import (
    coords_to_posture,
    coords_to_tangent,
    posture_coords,
    posture_transport,
    sphere_distance,
    tangent_to_coords,
)
from motionlab.stats import (
    Hyper,
    MotionDistribution,
    WrappedNormal,
    default_hyper,
    fit_map,
    fit_mle,
    log_density,
    frame_change,
    map_objective,
    sample_wrapped,
    transport_cov,
)

e1, e2, e3 = np.eye(3)


def random_cov(rng, d, scale=0.1, floor=0.01):
    A = rng.normal(size=(d, d)) * scale
    return A @ A.T + floor * np.eye(d)


class TestLogDensity:
    def test_origin_identity(self):
        assert log_density(np.zeros(4), np.eye(4)) == 0.0

    def test_outside_support(self):
        c = np.array([np.pi / 2 + 0.1, 0.0, 0.0, 0.0])
        assert log_density(c, np.eye(4)) == -np.inf

    def test_ratio_matches_quadratic_form(self):
        rng = np.random.default_rng(0)
        K = random_cov(rng, 6)
        a, b = rng.normal(size=(2, 6)) * 0.2
        Kinv = np.linalg.inv(K)
        expected = -0.5 * (a @ Kinv @ a - b @ Kinv @ b)
        assert log_density(a, K) - log_density(b, K) == pytest.approx(expected, rel=1e-12)

    def test_singular(self):
        with pytest.raises(SingularCovariance):
            log_density(np.zeros(2), np.zeros((2, 2)))

    def test_batched(self):
        rng = np.random.default_rng(1)
        K = random_cov(rng, 4)
        c = rng.normal(size=(5, 4)) * 0.1
        np.testing.assert_allclose(log_density(c, K), [log_density(x, K) for x in c], rtol=1e-13)


class TestSampler:
    def test_zero_cov_returns_mean(self):
        mu = random_posture(np.random.default_rng(2), 3)
        np.testing.assert_array_equal(sample_wrapped(mu, np.zeros((6, 6)), seed=1), mu)

    def test_deterministic(self):
        mu = random_posture(np.random.default_rng(3), 3)
        K = 0.05 * np.eye(6)
        np.testing.assert_array_equal(sample_wrapped(mu, K, seed=7), sample_wrapped(mu, K, seed=7))

    def test_in_support(self):
        mu = random_posture(np.random.default_rng(4), 2)
        Y = sample_wrapped(mu, 0.5 * np.eye(4), seed=0, size=2000)
        c = posture_coords(mu, Y)
        assert np.all(np.linalg.norm(c.reshape(-1, 2, 2), axis=-1) <= np.pi / 2 + 1e-9)

    def test_mean_of_small_cov(self):
        mu = random_posture(np.random.default_rng(5), 2)
        sigma = 0.05
        Y = sample_wrapped(mu, sigma**2 * np.eye(4), seed=1, size=10_000)
        cbar = posture_coords(mu, Y).mean(axis=0)
        assert np.all(np.abs(cbar) < 3 * sigma / np.sqrt(10_000))

    def test_stall(self):
        mu = random_posture(np.random.default_rng(6), 8)
        with pytest.raises(RejectionStall):
            sample_wrapped(mu, 100.0 * np.eye(16), seed=0)


class TestMLE:
    def test_identical(self):
        mu = random_posture(np.random.default_rng(7), 3)
        fit = fit_mle(np.tile(mu, (10, 1, 1)))
        np.testing.assert_array_equal(fit.mean, mu)
        np.testing.assert_array_equal(fit.cov, np.zeros((6, 6)))

    def test_midpoint(self):
        fit = fit_mle(np.array([[e1], [e2]]))
        np.testing.assert_allclose(fit.mean[0], [np.sqrt(2) / 2, np.sqrt(2) / 2, 0], atol=1e-12)

    def test_stationarity(self):
        rng = np.random.default_rng(8)
        mu = random_posture(rng, 3)
        Y = sample_wrapped(mu, random_cov(rng, 6), rng=rng, size=200)
        fit = fit_mle(Y, tol=1e-10)
        assert np.linalg.norm(posture_coords(fit.mean, Y).mean(axis=0)) <= 1e-10

    @pytest.mark.parametrize("seed", range(3))
    def test_recovery(self, seed):
        rng = np.random.default_rng(seed)
        mu = random_posture(rng, 4)
        K = random_cov(rng, 8)
        fit = fit_mle(sample_wrapped(mu, K, rng=rng, size=500))
        assert np.max(sphere_distance(fit.mean, mu)) < 0.05
        K_hat = transport_cov(fit.cov, fit.mean, mu)
        assert np.linalg.norm(K_hat - K) / np.linalg.norm(K) < 0.15

    def test_json_roundtrip(self):
        w = WrappedNormal(np.array([e3]), 0.1 * np.eye(2))
        back = WrappedNormal.from_dict(json.loads(json.dumps(w.to_dict())))
        np.testing.assert_array_equal(back.cov, w.cov)


class TestFrameChange:
    def test_same_point_is_identity(self):
        mu = random_posture(np.random.default_rng(20), 3)
        np.testing.assert_allclose(frame_change(mu, mu), np.eye(6), atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_transported_vectors(self, seed):
        rng = np.random.default_rng(seed)
        src = random_posture(rng, 3)
        dst = coords_to_posture(src, rng.normal(size=6) * 0.5)
        c = rng.normal(size=6)
        moved = posture_transport(src, dst, coords_to_tangent(src, c))
        np.testing.assert_allclose(frame_change(src, dst) @ c, tangent_to_coords(dst, moved), atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_orthogonal_and_reversible(self, seed):
        rng = np.random.default_rng(seed)
        src = random_posture(rng, 2)
        dst = coords_to_posture(src, rng.normal(size=4) * 0.5)
        R = frame_change(src, dst)
        np.testing.assert_allclose(R @ R.T, np.eye(4), atol=1e-12)
        np.testing.assert_allclose(frame_change(dst, src) @ R, np.eye(4), atol=1e-12)
        K = random_cov(rng, 4)
        np.testing.assert_allclose(transport_cov(transport_cov(K, src, dst), dst, src), K, atol=1e-12)


def smooth_cohort(rng, M=25, L=12, P=3):
    base = random_posture(rng, P)
    drift = rng.normal(size=2 * P) * 0.15
    K = random_cov(rng, 2 * P, scale=0.05, floor=0.005)
    steps = [coords_to_posture(base, np.sin(l / 3) * drift) for l in range(L)]
    return np.stack([sample_wrapped(m, K, rng=rng, size=M) for m in steps], axis=1)


class TestMAP:
    def test_single_step_identical(self):
        mu = random_posture(np.random.default_rng(9), 2)
        data = np.tile(mu, (6, 1, 1, 1))
        hyper = Hyper(1.0, mu, 1e-4 * np.eye(4), 5.0)
        fit = fit_map(data, hyper)
        np.testing.assert_allclose(fit.means[0], mu, atol=1e-12)
        np.testing.assert_allclose(fit.covs[0], 1e-4 * np.eye(4) / (6 + 5.0 + 2 * 3 - 1), rtol=1e-12)

    def test_monotone_objective(self):
        data = smooth_cohort(np.random.default_rng(10))
        fit = fit_map(data)
        assert len(fit.objective) >= 2
        assert np.all(np.diff(fit.objective) <= 1e-8)

    def test_dominates_initialization(self):
        data = smooth_cohort(np.random.default_rng(11))
        fit = fit_map(data)
        assert fit.objective[-1] <= fit.objective[0]

    def test_vanishing_coupling_matches_mle(self):
        data = smooth_cohort(np.random.default_rng(12))
        P = data.shape[2]
        hyper = default_hyper(data, P)
        hyper.lambda2 = 1e9
        hyper.K0 = 1e-8 * np.eye(2 * P)
        hyper.nu0 = 2 * P - 1 + 1e-6
        fit = fit_map(data, hyper)
        mle = np.stack([fit_mle(data[:, l]).mean for l in range(data.shape[1])])
        assert np.max(sphere_distance(fit.means, mle)) < 1e-3

    def test_objective_matches_direct_formula(self):
        rng = np.random.default_rng(13)
        data = smooth_cohort(rng, M=5, L=3, P=2)
        fit = fit_map(data)
        h = fit.hyper
        M = data.shape[0]
        total, prev = 0.0, h.mu0
        for l in range(3):
            K = fit.covs[l]
            c = posture_coords(fit.means[l], data[:, l])
            total += (M + h.nu0 + 2 * 3 - 1) * np.log(np.linalg.det(K))
            total += sum(x @ np.linalg.solve(K, x) for x in c) + np.trace(h.K0 @ np.linalg.inv(K))
            total += np.sum(sphere_distance(fit.means[l], prev) ** 2) / h.lambda2
            prev = fit.means[l]
        assert map_objective(data, fit.means, fit.covs, h) == pytest.approx(total, rel=1e-10)

    def test_invalid_hyper(self):
        data = smooth_cohort(np.random.default_rng(14), M=4, L=2, P=2)
        with pytest.raises(DataError):
            fit_map(data, Hyper(-1.0, data[0, 0], np.eye(4), 6.0))

    def test_json_roundtrip(self):
        data = smooth_cohort(np.random.default_rng(15), M=4, L=3, P=2)
        fit = fit_map(data)
        back = MotionDistribution.loads(fit.dumps())
        np.testing.assert_array_equal(back.means, fit.means)
        np.testing.assert_array_equal(back.covs, fit.covs)
        assert back.dumps() == fit.dumps()
