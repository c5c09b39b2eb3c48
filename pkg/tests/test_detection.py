import numpy as np
import pytest

from bloodsim.detection import (
    CalibrationOutOfRange,
    TooFewBlanks,
    calibrate_flicker,
    compute_metrics,
    decide_sensor,
    estimate_threshold,
    fuse_or,
    make_reading,
)
from bloodsim.engine import run_regime
from bloodsim.params import RegimeConfig, apply_overrides


def _cfg(**dotted):
    return apply_overrides(RegimeConfig(), dotted) if dotted else RegimeConfig()


class TestEstimateThreshold:
    def test_stated_formula(self):
        # mean 2e-13, sample std 1e-13 -> theta = 2e-13 + 1.645e-13
        thr = estimate_threshold([1e-13, 2e-13, 3e-13])
        assert thr.blank_mean == pytest.approx(2e-13, rel=1e-12)
        assert thr.blank_std == pytest.approx(1e-13, rel=1e-12)
        assert thr.theta == pytest.approx(3.645e-13, rel=1e-12)
        assert thr.n_samples == 3

    def test_zero_spread(self):
        thr = estimate_threshold([4e-12] * 10)
        assert thr.theta == 4e-12

    def test_too_few_blanks(self):
        with pytest.raises(TooFewBlanks):
            estimate_threshold([1e-13])

    def test_rejects_negative_magnitudes(self):
        with pytest.raises(ValueError):
            estimate_threshold([1e-13, -1e-13])

    def test_half_normal_exceedance(self):
        # Oracle: for |N(0, s^2)| the threshold sits at
        # sqrt(2/pi) + 1.645*sqrt(1 - 2/pi) = 1.78951 s, whose exceedance is
        # 2*(1 - Phi(1.78951)) = 7.35%.  (Notably above the Gaussian 5%.)
        rng = np.random.default_rng(77)
        draws = np.abs(rng.normal(0.0, 1.0, 100_000))
        thr = estimate_threshold(draws)
        rate = float((draws > thr.theta).mean())
        assert rate == pytest.approx(0.0735, abs=0.005)


class TestDecideSensor:
    def test_equal_to_threshold_is_negative(self):
        assert decide_sensor(3.645e-13, 3.645e-13) is False

    def test_magnitude_rule(self):
        assert decide_sensor(-2 * 3.0e-13, 3.0e-13) is True

    def test_zero_boundary(self):
        assert decide_sensor(0.0, 0.0) is False

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            decide_sensor(1e-13, -1e-13)


class TestFuseOr:
    def test_none_fire(self):
        assert fuse_or([False, False]) is False

    def test_one_fires(self):
        assert fuse_or([True, False]) is True

    def test_all_fire(self):
        assert fuse_or([True, True]) is True

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fuse_or([])


class TestComputeMetrics:
    def test_sensitivity_counting(self):
        sens, _ = compute_metrics([1, 1, 1, 0], [0, 0])
        assert sens == 75.0

    def test_perfect_specificity(self):
        _, spec = compute_metrics([1], [0, 0, 0, 0])
        assert spec == 100.0

    def test_or_fused_blank_rate(self):
        # two independent 5% sensors, OR-fused: realization FPR 1-(0.95)^2
        rng = np.random.default_rng(3)
        blanks = rng.random((1000, 2)) < 0.05
        fused = blanks.any(axis=1)
        _, spec = compute_metrics([1], fused)
        assert spec == pytest.approx(90.25, abs=3.0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        present = rng.random(500) < 0.4
        blank = rng.random(500) < 0.1
        base = compute_metrics(present, blank)
        shuffled = compute_metrics(rng.permutation(present), rng.permutation(blank))
        assert base == shuffled

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics([], [0])


def test_make_reading_measured_is_exact_sum():
    reading = make_reading(delta_i=2.0e-12, eta=-0.5e-12, theta=1.0e-12)
    assert reading.measured == 2.0e-12 + -0.5e-12
    assert reading.decision is True


class TestCalibrateFlicker:
    # Shrunken Monte Carlo sizes keep these runs cheap; the acceptance suite
    # exercises the full-size calibration.
    SMALL = {"montecarlo.n_blank": 150, "montecarlo.n_present": 150}

    def test_more_flicker_never_helps(self):
        cfg = _cfg(**self.SMALL)
        anchor = apply_overrides(cfg, {
            "analyte.c_target": "1fM", "electrolyte.lambda_d": "0.7nm",
            "interface.t_ox": "3.5nm", "interface.d_b": "5nm"})
        sens = []
        for k in (1e-27, 1e-25, 1e-23):
            probe = apply_overrides(anchor, {"noise.k_flicker": k})
            sens.append(run_regime(probe).sensitivity)
        assert sens[0] >= sens[1] >= sens[2]

    def test_noise_free_limit_driven_by_blank_spread(self):
        # with both noise terms off, detection is set purely by the blank
        # composition spread; sensitivity is then deterministic in the seed
        cfg = _cfg(**self.SMALL, **{"noise.enabled": False})
        result = run_regime(cfg)
        assert result.threshold.theta > 0
        assert result.sensitivity > 90.0  # 1 fM clears the blank spread easily

    def test_calibrated_constant_reproduces_band(self):
        cfg = _cfg(**self.SMALL)
        k = calibrate_flicker(cfg, tolerance_pp=8.0)
        fresh = apply_overrides(cfg, {
            "noise.k_flicker": k, "montecarlo.master_seed": 123,
            "analyte.c_target": "1fM", "electrolyte.lambda_d": "0.7nm",
            "interface.t_ox": "3.5nm", "interface.d_b": "5nm"})
        sens = run_regime(fresh).sensitivity
        assert abs(sens - 30.0) <= 8.0 + 3.0 * 100.0 * np.sqrt(0.3 * 0.7 / 150)

    def test_unreachable_target_raises(self):
        cfg = _cfg(**self.SMALL)
        with pytest.raises(CalibrationOutOfRange):
            calibrate_flicker(cfg, target_sensitivity=99.9, tolerance_pp=0.01)
