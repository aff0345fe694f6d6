"""Evaluation: Pearson correlation, target sweeps, Fréchet distance."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faderlab.attributes import AttributeStats, measure
from faderlab.evaluation import (
    FidelityResult,
    GaussianStats,
    SweepResult,
    attribute_sweep,
    eval_fidelity,
    frechet_distance,
    gaussian_stats,
    measure_features,
    pcc,
    sweep_targets,
)
from faderlab.tokens import NOTE_OFF, SEQ_LEN


def window_with_notes(k, pitch=60):
    """Valid token window holding exactly k onsets (density k / SEQ_LEN)."""
    tokens = np.full(SEQ_LEN, NOTE_OFF, dtype=np.int64)
    tokens[:k] = pitch + (np.arange(k) % 12)
    return tokens


def stats_with_p99(p99):
    return AttributeStats(mean=p99 / 2, std=p99 / 4, min=0.0, max=p99, p99=p99)


class TestPcc:
    def test_self_correlation_is_one(self):
        x = np.array([0.3, 1.7, -2.4, 5.0])
        assert pcc(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_negated_is_minus_one(self):
        x = np.array([0.3, 1.7, -2.4, 5.0])
        assert pcc(x, -x) == pytest.approx(-1.0, abs=1e-12)

    def test_frozen_oracle_value(self):
        # cross-checked against np.corrcoef on (1,2,3) vs (2,4,7)
        assert pcc([1.0, 2.0, 3.0], [2.0, 4.0, 7.0]) == pytest.approx(
            0.9933992677987828, abs=1e-12
        )

    def test_matches_numpy_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=12)
            y = rng.normal(size=12)
            assert pcc(x, y) == pytest.approx(float(np.corrcoef(x, y)[0, 1]), abs=1e-12)

    def test_affine_invariance_exact(self):
        # power-of-two scale and representable shift keep the arithmetic exact
        x = np.array([1.0, 2.0, 3.0, 5.0])
        y = np.array([2.0, 4.0, 7.0, 6.0])
        base = pcc(x, y)
        assert pcc(2.0 * x + 4.0, y) == base
        assert pcc(x, 0.5 * y + 8.0) == base

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="zero variance"):
            pcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="zero variance"):
            pcc([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])

    def test_input_validation(self):
        with pytest.raises(ValueError):
            pcc([1.0], [2.0])
        with pytest.raises(ValueError):
            pcc([1.0, 2.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            pcc(np.zeros((2, 2)), np.zeros((2, 2)))

    @given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=12, unique=True))
    @settings(max_examples=50)
    def test_bounded_and_symmetric(self, vals):
        x = np.array(vals, dtype=np.float64)
        rng = np.random.default_rng(len(vals))
        y = rng.normal(size=len(vals))
        r = pcc(x, y)
        assert abs(r) <= 1.0 + 1e-12
        assert pcc(y, x) == pytest.approx(r, abs=1e-12)


class TestSweepTargets:
    def test_two_points(self):
        np.testing.assert_array_equal(
            sweep_targets(stats_with_p99(3.5), 2), np.array([0.0, 3.5])
        )

    def test_five_points_unit_p99(self):
        np.testing.assert_allclose(
            sweep_targets(stats_with_p99(1.0), 5), [0.0, 0.25, 0.5, 0.75, 1.0]
        )

    def test_bounds(self):
        targets = sweep_targets(stats_with_p99(0.7), 50)
        assert targets[0] == 0.0
        assert targets[-1] == pytest.approx(0.7)
        assert np.all(targets <= 0.7 + 1e-12)
        assert np.all(np.diff(targets) > 0)

    def test_too_few_rejected(self):
        with pytest.raises(ValueError):
            sweep_targets(stats_with_p99(1.0), 1)


def density_generator(target, count, seed):
    """Emit windows whose note_density equals the target exactly."""
    k = round(target * SEQ_LEN)
    return [window_with_notes(k) for _ in range(count)]


class TestAttributeSweep:
    # p99 = 16/64 puts every sweep target on the representable k/64 grid
    STATS = stats_with_p99(16 / SEQ_LEN)

    def test_identity_generator_pcc_one(self):
        result = attribute_sweep(
            density_generator, "note_density", self.STATS, n=17, per_target=3, seed=0
        )
        assert result.pcc == pytest.approx(1.0, abs=1e-12)
        assert result.failures == 0
        np.testing.assert_allclose(result.measured, result.targets)

    def test_identity_pcc_independent_of_per_target(self):
        for per in (1, 4):
            result = attribute_sweep(
                density_generator, "note_density", self.STATS, n=9, per_target=per, seed=0
            )
            assert result.pcc == pytest.approx(1.0, abs=1e-12)

    def test_constant_generator_surfaces_undefined(self):
        def constant(target, count, seed):
            return [window_with_notes(8) for _ in range(count)]

        with pytest.raises(ValueError, match="zero variance"):
            attribute_sweep(constant, "note_density", self.STATS, n=5, per_target=2)

    def test_failures_counted_and_excluded(self):
        targets = sweep_targets(self.STATS, 9)
        bad = float(targets[3])

        def flaky(target, count, seed):
            if target == bad:
                raise RuntimeError("synthetic failure")
            return density_generator(target, count, seed)

        result = attribute_sweep(
            flaky, "note_density", self.STATS, n=9, per_target=2, seed=0
        )
        assert result.failures == 2
        assert all(r[0] != bad for r in result.rows)
        assert math.isnan(result.measured[3])
        assert len(result.rows) == 8 * 2
        assert result.pcc == pytest.approx(1.0, abs=1e-12)

    def test_per_target_seeds_distinct_and_deterministic(self):
        calls_a, calls_b = [], []

        def recording(calls):
            def gen(target, count, seed):
                calls.append((target, count, seed))
                return density_generator(target, count, seed)

            return gen

        attribute_sweep(recording(calls_a), "note_density", self.STATS, n=6, per_target=2, seed=42)
        attribute_sweep(recording(calls_b), "note_density", self.STATS, n=6, per_target=2, seed=42)
        assert calls_a == calls_b
        seeds = [c[2] for c in calls_a]
        assert len(set(seeds)) == len(seeds)
        assert all(c[1] == 2 for c in calls_a)

    def test_row_records(self):
        result = attribute_sweep(
            density_generator, "note_density", self.STATS, n=3, per_target=2, seed=0
        )
        assert [r[2] for r in result.rows] == [0, 1, 0, 1, 0, 1]
        rows = result.as_rows()
        rows.clear()
        assert len(result.rows) == 6

    def test_all_failures_rejected(self):
        def broken(target, count, seed):
            raise RuntimeError("nothing works")

        with pytest.raises(ValueError, match="all generations failed"):
            attribute_sweep(broken, "note_density", self.STATS, n=3, per_target=2)


class TestGaussianStats:
    def test_identical_rows_zero_covariance(self):
        stats = gaussian_stats(np.tile([1.0, 2.0, 3.0], (5, 1)))
        np.testing.assert_array_equal(stats.cov, np.zeros((3, 3)))
        np.testing.assert_allclose(stats.mean, [1.0, 2.0, 3.0])

    def test_two_point_sample_variance(self):
        stats = gaussian_stats(np.array([0.0, 2.0]))
        assert stats.mean[0] == 1.0
        assert stats.cov[0, 0] == 2.0  # (n-1) denominator
        assert stats.dim == 1

    def test_matches_numpy_cov(self):
        rng = np.random.default_rng(1)
        feats = rng.normal(size=(40, 4))
        stats = gaussian_stats(feats)
        np.testing.assert_allclose(stats.cov, np.cov(feats, rowvar=False), atol=1e-12)
        np.testing.assert_allclose(stats.mean, feats.mean(axis=0))

    def test_symmetric_and_psd(self):
        rng = np.random.default_rng(2)
        feats = rng.normal(size=(10, 6)) @ rng.normal(size=(6, 6))
        stats = gaussian_stats(feats)
        np.testing.assert_array_equal(stats.cov, stats.cov.T)
        eigvals = np.linalg.eigvalsh(stats.cov + 1e-10 * np.eye(6))
        assert np.all(eigvals >= 0.0)

    def test_vector_input_promoted(self):
        stats = gaussian_stats(np.array([1.0, 3.0, 5.0]))
        assert stats.cov.shape == (1, 1)
        assert stats.cov[0, 0] == pytest.approx(4.0)

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            gaussian_stats(np.zeros((1, 4)))


def gauss_1d(mean, var):
    return GaussianStats(mean=np.array([mean]), cov=np.array([[var]]))


class TestFrechetDistance:
    def test_identical_is_zero(self):
        rng = np.random.default_rng(3)
        feats = rng.normal(size=(30, 4))
        a = gaussian_stats(feats)
        d = frechet_distance(a, a)
        assert 0.0 <= d <= 1e-9

    def test_unit_mean_shift(self):
        assert frechet_distance(gauss_1d(0.0, 1.0), gauss_1d(1.0, 1.0)) == pytest.approx(
            1.0, abs=1e-9
        )

    def test_variance_gap(self):
        # N(0,1) vs N(0,4): (sigma 1 vs 2) -> (1-2)^2 = 1
        assert frechet_distance(gauss_1d(0.0, 1.0), gauss_1d(0.0, 4.0)) == pytest.approx(
            1.0, abs=1e-9
        )

    def test_one_dimensional_analytic(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            ma, mb = rng.normal(size=2)
            va, vb = rng.uniform(0.1, 4.0, size=2)
            expected = (ma - mb) ** 2 + (math.sqrt(va) - math.sqrt(vb)) ** 2
            assert frechet_distance(gauss_1d(ma, va), gauss_1d(mb, vb)) == pytest.approx(
                expected, abs=1e-9
            )

    def test_diagonal_analytic(self):
        ma = np.array([0.0, 1.0, -2.0])
        mb = np.array([1.0, 1.0, 0.0])
        va = np.array([1.0, 4.0, 0.25])
        vb = np.array([9.0, 1.0, 1.0])
        expected = float(np.sum((ma - mb) ** 2) + np.sum((np.sqrt(va) - np.sqrt(vb)) ** 2))
        a = GaussianStats(mean=ma, cov=np.diag(va))
        b = GaussianStats(mean=mb, cov=np.diag(vb))
        assert frechet_distance(a, b) == pytest.approx(expected, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            a = gaussian_stats(rng.normal(size=(20, 4)))
            b = gaussian_stats(rng.normal(size=(25, 4)) * 2.0 + 1.0)
            assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), abs=1e-8)

    def test_mean_shift_adds_squared_norm(self):
        rng = np.random.default_rng(6)
        a = gaussian_stats(rng.normal(size=(20, 3)))
        b = GaussianStats(mean=a.mean.copy(), cov=np.eye(3))
        base = frechet_distance(a, b)
        shift = np.array([1.0, -2.0, 0.5])
        shifted = GaussianStats(mean=a.mean + shift, cov=a.cov)
        assert frechet_distance(shifted, b) == pytest.approx(
            base + float(shift @ shift), abs=1e-8
        )

    def test_indefinite_covariance_clamped(self):
        # slightly negative eigenvalue, as produced by numerical noise
        wobble = np.array([[1.0, 0.0], [0.0, -1e-12]])
        a = GaussianStats(mean=np.zeros(2), cov=wobble)
        b = GaussianStats(mean=np.zeros(2), cov=np.eye(2))
        d = frechet_distance(a, b)
        assert math.isfinite(d)
        assert d >= 0.0

    def test_never_negative(self):
        rng = np.random.default_rng(7)
        feats = rng.normal(size=(50, 4))
        a = gaussian_stats(feats)
        b = gaussian_stats(feats + rng.normal(size=(50, 4)) * 1e-9)
        assert frechet_distance(a, b) >= 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            frechet_distance(gauss_1d(0.0, 1.0), GaussianStats(np.zeros(2), np.eye(2)))


class TestMeasureFeatures:
    def test_stacks_attribute_vectors(self):
        windows = [window_with_notes(k) for k in (4, 8, 16)]
        feats = measure_features(windows)
        assert feats.shape == (3, 4)
        for row, tokens in zip(feats, windows):
            np.testing.assert_array_equal(row, measure(tokens).as_array())


class TestEvalFidelity:
    def _reference(self, n=12):
        rng = np.random.default_rng(8)
        windows = [
            window_with_notes(int(k), pitch=int(p))
            for k, p in zip(rng.integers(3, 30, n), rng.integers(40, 80, n))
        ]
        return windows, measure_features(windows)

    def test_replay_generator_scores_zero(self):
        windows, refs = self._reference()
        targets = refs[:, 1]

        def replay(targets_arg, seed):
            return windows

        def other(count, seed):
            return [window_with_notes(2) for _ in range(count)]

        result = eval_fidelity(refs, targets, replay, other, seed=3)
        assert isinstance(result, FidelityResult)
        assert result.conditional == pytest.approx(0.0, abs=1e-9)
        assert result.unconditional > result.conditional
        assert result.count == len(windows)

    def test_seeds_forwarded(self):
        windows, refs = self._reference()
        seen = {}

        def cond(targets_arg, seed):
            seen["cond"] = seed
            np.testing.assert_array_equal(targets_arg, refs[:, 1])
            return windows

        def uncond(count, seed):
            seen["uncond"] = (count, seed)
            return windows

        eval_fidelity(refs, refs[:, 1], cond, uncond, seed=7)
        assert seen["cond"] == 7
        assert seen["uncond"] == (len(windows), 8)

    def test_validation(self):
        windows, refs = self._reference()
        gen = lambda *a: windows
        with pytest.raises(ValueError, match="reference"):
            eval_fidelity(refs[:1], refs[:1, 1], gen, gen)
        with pytest.raises(ValueError, match="reference"):
            eval_fidelity(refs[:, 0], refs[:, 0], gen, gen)
        with pytest.raises(ValueError, match="target"):
            eval_fidelity(refs, refs[:3, 1], gen, gen)
