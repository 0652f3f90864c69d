import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import SmoothCurve, random_posture
from motionlab.errors import BadInterval, DataError
from motionlab.motion import PostureSequence, RateFunction, Warping, uniform_grid
from motionlab.sir import reconstruct_from_features, sequence_coords
from motionlab.sphere import coords_to_posture, posture_distance, sphere_distance
from motionlab.stats import Hyper, MotionDistribution
from motionlab.synth import DatasetSpec, reference_sequence, synthesize_dataset
from motionlab.workflows import (
    best_practice,
    best_practice_window,
    class_distance_table,
    classify_1nn,
    common_reference,
    distance_matrix,
    find_bottleneck,
    mean_pace_warping,
    mean_rate,
    motion_variation,
    prepare_sequences,
    rate_analysis,
    rate_normalized,
    restandardize,
)

GRID = uniform_grid(101)


def rates(values):
    return [RateFunction(GRID, np.asarray(v, dtype=float)) for v in values]


def cohort(pace=1.0, classes=None, per_class=6, seed=0, warp=0.15, L=80, jitter=0.05):
    classes = classes or [{"label": "a"}]
    spec = DatasetSpec(classes=classes, per_class=per_class, seed=seed, warp_strength=warp, pace=pace,
                       duration_jitter=jitter)
    seqs = prepare_sequences(synthesize_dataset(spec), L=L)
    ref = prepare_sequences([reference_sequence(spec, 0)], L=L)[0]
    return spec, seqs, ref


@pytest.fixture(scope="module")
def five_classes():
    spec = DatasetSpec(classes=[{"label": f"c{k}"} for k in range(5)], per_class=4, seed=11)
    seqs = prepare_sequences(synthesize_dataset(spec), L=60)
    return seqs, [s.label for s in seqs]


class TestRecognition:
    def test_identical_item_is_its_own_neighbour(self):
        rng = np.random.default_rng(0)
        seqs = [SmoothCurve(rng, 3).sequence(60) for _ in range(4)]
        labels = ["w", "x", "y", "z"]
        res = classify_1nn(seqs, labels, [seqs[2]], ["y"])
        assert res.predicted == ["y"] and res.accuracy == 1.0
        assert res.distances[0, 2] < 1e-6

    def test_five_classes(self, five_classes):
        seqs, labels = five_classes
        train = [s for i, s in enumerate(seqs) if i % 4]
        test = [s for i, s in enumerate(seqs) if i % 4 == 0]
        res = classify_1nn(train, [s.label for s in train], test, [s.label for s in test])
        assert res.accuracy == 1.0

    def test_within_class_closer(self, five_classes):
        seqs, labels = five_classes
        D = distance_matrix(seqs, seqs, common_reference(seqs))
        classes, T = class_distance_table(D, labels)
        within = np.diag(T)
        between = T[~np.eye(len(classes), dtype=bool)]
        assert within.max() < between.min()

    def test_ties_go_to_first(self):
        rng = np.random.default_rng(1)
        s = SmoothCurve(rng, 2).sequence(40)
        res = classify_1nn([s, s], ["first", "second"], [s])
        assert res.nearest[0] == 0 and res.accuracy is None

    def test_jobs_do_not_change_distances(self, five_classes):
        seqs, _ = five_classes
        Y = common_reference(seqs)
        np.testing.assert_array_equal(distance_matrix(seqs[:4], seqs[4:8], Y),
                                      distance_matrix(seqs[:4], seqs[4:8], Y, jobs=2))

    def test_empty_training_set(self):
        with pytest.raises(DataError):
            classify_1nn([], [], [])


class TestRates:
    def test_self_alignment_has_zero_rate(self):
        _, _, ref = cohort()
        rec = rate_analysis([ref], ref)[0]
        np.testing.assert_array_equal(rec.rate.values, 0.0)

    def test_uniformly_slower_cohort(self):
        spec, seqs, ref = cohort(pace=2.0, warp=0.0, per_class=3, jitter=0.0)
        for rec in rate_analysis(seqs, ref):
            assert abs(np.median(rec.rate.values) - np.log(2.0)) < 0.1

    def test_slow_segment_shows_positive_rate_inside(self):
        seg = {"center": 0.5, "width": 0.2, "factor": 3.0}
        _, seqs, ref = cohort(classes=[{"label": "a", "slow_segment": seg}], warp=0.05, per_class=4, L=100)
        r = mean_rate([rec.rate for rec in rate_analysis(seqs, ref)])
        inside = np.abs(r.grid - 0.5) < 0.04
        outside = np.abs(r.grid - 0.5) > 0.15
        assert r.values[inside].mean() > 0.5 > abs(np.median(r.values[outside]))

    def test_normalized_sequences_live_on_reference_grid(self):
        _, seqs, ref = cohort(per_class=2)
        norm = rate_normalized(seqs, rate_analysis(seqs, ref))
        assert all(np.array_equal(n.grid, ref.grid) for n in norm)

    def test_mean_rate_requires_shared_grid(self):
        with pytest.raises(DataError):
            mean_rate([RateFunction(GRID, np.zeros(101)), RateFunction(uniform_grid(11), np.zeros(11))])


class TestBottleneck:
    def test_zero_rates_pick_first_point(self):
        rep = find_bottleneck(rates(np.zeros((3, 101))))
        assert rep.t_star == 0.0 and rep.score == 0.0

    @pytest.mark.parametrize("center", [0.2, 0.55, 0.9])
    def test_planted_slow_window(self, center):
        bump = 0.8 * np.exp(-0.5 * ((GRID - center) / 0.01) ** 2)
        rng = np.random.default_rng(2)
        rep = find_bottleneck(rates(bump + 0.02 * rng.normal(size=(5, 101))), delta=0.02)
        assert abs(rep.t_star - center) <= 0.02 + 0.01

    def test_deeper_dip_scores_lower(self):
        bump = np.exp(-0.5 * ((GRID - 0.4) / 0.02) ** 2)
        a = find_bottleneck(rates([0.5 * bump] * 4)).score
        b = find_bottleneck(rates([1.0 * bump] * 4)).score
        assert b < a < 0

    def test_faster_everywhere_scores_zero(self):
        assert find_bottleneck(rates(-np.ones((2, 101)))).score == 0.0

    def test_strict_form_on_warps(self):
        rep = find_bottleneck([], strict=True, warpings=[Warping.identity(GRID)] * 3)
        assert rep.score == 0.0 and rep.t_star == 0.0

    def test_window_is_strict(self):
        r = np.zeros(101)
        r[50] = 1.0
        rep = find_bottleneck(rates([r]), delta=0.01)
        # only the point itself lies strictly within 0.01 of t = 0.5
        assert rep.t_star == pytest.approx(0.5) and rep.score == -1.0

    def test_bad_delta(self):
        with pytest.raises(DataError):
            find_bottleneck(rates([np.zeros(101)]), delta=0.0)


def planted_window(seed, M=300, W=3, P=3, scale=0.02, noise=0.002):
    """Isotropic window coordinates whose rate depends on one planted direction."""
    rng = np.random.default_rng(seed)
    means = np.stack([random_posture(rng, P) for _ in range(W)])
    a = rng.normal(size=W * 2 * P)
    a /= np.linalg.norm(a)
    c = scale * rng.normal(size=(M, len(a)))
    r = c @ a + noise * rng.normal(size=M)
    Y = coords_to_posture(means[None], c.reshape(M, W, 2 * P))
    return Y, r, means, a


class TestBestPractice:
    @pytest.mark.parametrize("seed", range(3))
    def test_high_low_differ_along_planted_direction(self, seed):
        Y, r, means, a = planted_window(seed)
        bp = best_practice_window(Y, r, means, B=1)
        diff = sequence_coords(bp.reconstructed[-1], means) - sequence_coords(bp.reconstructed[0], means)
        assert abs(diff @ a) / np.linalg.norm(diff) >= 0.9

    @pytest.mark.parametrize("seed", range(3))
    def test_reconstruction_at_observed_features(self, seed):
        Y, r, means, _ = planted_window(seed)
        bp = best_practice_window(Y, r, means, B=1)
        for m in range(0, len(Y), 10):
            rec = reconstruct_from_features(bp.features[m], bp.sir, means)
            assert np.max(sphere_distance(rec, Y[m])) < 0.1

    def test_targets_are_percentiles(self):
        Y, r, means, _ = planted_window(5, M=100)
        bp = best_practice_window(Y, r, means, B=1)
        np.testing.assert_allclose(bp.target_rates, np.percentile(r, [10, 50, 90]))

    def test_constant_rates_are_degenerate(self):
        Y, _, means, _ = planted_window(6, M=40)
        bp = best_practice_window(Y, np.full(40, 0.3), means)
        assert bp.degenerate
        np.testing.assert_array_equal(bp.reconstructed[1], means)

    def test_window_too_narrow(self):
        _, seqs, ref = cohort(per_class=3)
        recs = rate_analysis(seqs, ref)
        with pytest.raises(BadInterval):
            best_practice(rate_normalized(seqs, recs), [x.rate for x in recs], 0.5, delta=1e-4)

    def test_on_cohort(self):
        _, seqs, ref = cohort(per_class=8, warp=0.3)
        recs = rate_analysis(seqs, ref)
        bp = best_practice(rate_normalized(seqs, recs), [x.rate for x in recs], 0.5, delta=0.05, B=2)
        assert bp.reconstructed.shape == (3, len(bp.window), ref.n_parts, 3)
        assert bp.interval[0] < 0.5 < bp.interval[1]


def variation_model(P=3, L=4, seed=0, diag=None):
    rng = np.random.default_rng(seed)
    means = np.stack([random_posture(rng, P) for _ in range(L)])
    if diag is None:
        A = rng.normal(size=(L, 2 * P, 2 * P))
        covs = A @ A.transpose(0, 2, 1) * 0.01
    else:
        covs = np.broadcast_to(np.diag(diag), (L, 2 * P, 2 * P)).copy()
    return MotionDistribution(means, covs, Hyper(1.0, means, np.eye(2 * P) * 1e-3, 2 * P + 2))


class TestVariation:
    def test_zero_step_is_mean(self):
        m = variation_model()
        v = motion_variation(m, 2, s_values=[-1.0, 0.0, 1.0])
        np.testing.assert_allclose(v.postures[:, 1], np.broadcast_to(m.means[2], (2,) + m.means[2].shape), atol=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.05, 1.0))
    def test_symmetric_steps(self, seed, s):
        m = variation_model(seed=seed)
        v = motion_variation(m, 0, s_values=[-s, s])
        d = posture_distance(v.postures[:, 0], m.means[0]), posture_distance(v.postures[:, 1], m.means[0])
        np.testing.assert_allclose(d[0], d[1], atol=1e-12)

    def test_diagonal_covariance_moves_one_part(self):
        m = variation_model(diag=[0.5, 0.1, 0.0, 0.0, 0.0, 0.0])
        v = motion_variation(m, 1, n_eigs=1)
        np.testing.assert_allclose(v.explained, [0.5 / 0.6])
        moved = sphere_distance(v.postures[0], m.means[1])
        np.testing.assert_allclose(moved[:, 1:], 0.0, atol=1e-15)
        np.testing.assert_allclose(moved[:, 0], np.abs(v.s_values), atol=1e-12)

    def test_sd_scale(self):
        m = variation_model(diag=[0.25, 0, 0, 0, 0, 0])
        v = motion_variation(m, 0, s_values=[1.0], n_eigs=1, scale="sd")
        assert sphere_distance(v.postures[0, 0], m.means[0])[0] == pytest.approx(0.5)


class TestRestandardize:
    def ref(self):
        return SmoothCurve(np.random.default_rng(3), 3).sequence(101, duration=2.0)

    def test_zero_mean_rate_is_identity(self):
        ref = self.ref()
        new = restandardize(ref, RateFunction(ref.grid, np.zeros(101)))
        np.testing.assert_allclose(new.postures, ref.postures, atol=1e-12)
        assert new.duration == pytest.approx(2.0)

    @pytest.mark.parametrize("c", [-0.5, np.log(2.0)])
    def test_constant_rate_rescales_duration_only(self, c):
        ref = self.ref()
        new = restandardize(ref, RateFunction(ref.grid, np.full(101, c)))
        np.testing.assert_allclose(new.postures, ref.postures, atol=1e-12)
        assert new.duration == pytest.approx(2.0 * np.exp(c))

    def test_linear_pace_warping(self):
        w, T = mean_pace_warping(RateFunction(GRID, np.log1p(GRID)), GRID)
        assert T == pytest.approx(1.5, rel=1e-12)
        np.testing.assert_allclose(w.values, (GRID + GRID**2 / 2) / 1.5, atol=1e-12)

    def test_slower_cohort_recentres(self):
        _, seqs, ref = cohort(pace=2.0, warp=0.2, per_class=5)
        Y = common_reference([ref])
        r_bar = mean_rate([x.rate for x in rate_analysis(seqs, ref, Y)])
        new = restandardize(ref, r_bar)
        after = mean_rate([x.rate for x in rate_analysis(seqs, new, Y)])
        assert abs(np.mean(after.values)) < 0.05
        assert new.duration == pytest.approx(2 * ref.duration, rel=0.1)
