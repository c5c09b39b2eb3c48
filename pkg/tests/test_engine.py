import time

import numpy as np
import pytest

from bloodsim.engine import (
    PURPOSE_EXPOSURE,
    PURPOSE_NOISE,
    SweepSpec,
    derive_stream,
    run_regime,
    run_sweep,
    sweep_points,
)
from bloodsim.params import MissingKey, RegimeConfig, apply_overrides


def _cfg(**dotted):
    return apply_overrides(RegimeConfig(), dotted) if dotted else RegimeConfig()


SMALL = {"montecarlo.n_blank": 60, "montecarlo.n_present": 60}


class TestDeriveStream:
    def test_same_path_same_draws(self):
        a = derive_stream(42, (0, 1, 0, PURPOSE_EXPOSURE)).generator()
        b = derive_stream(42, (0, 1, 0, PURPOSE_EXPOSURE)).generator()
        assert np.array_equal(a.random(1000), b.random(1000))

    def test_neighbouring_paths_uncorrelated(self):
        n = 1_000_000
        base = derive_stream(7, (3, 5, 1, PURPOSE_NOISE)).generator().random(n)
        for path in [(3, 5, 1, PURPOSE_EXPOSURE), (3, 6, 1, PURPOSE_NOISE),
                     (4, 5, 1, PURPOSE_NOISE), (3, 5, 0, PURPOSE_NOISE)]:
            other = derive_stream(7, path).generator().random(n)
            corr = np.corrcoef(base, other)[0, 1]
            assert abs(corr) < 4.0 / np.sqrt(n)

    def test_different_seed_differs(self):
        a = derive_stream(1, (0, 0, 0, 0)).generator().random(100)
        b = derive_stream(2, (0, 0, 0, 0)).generator().random(100)
        assert not np.array_equal(a, b)

    def test_component_range_validated(self):
        with pytest.raises(ValueError):
            derive_stream(0, (2**32, 0, 0, 0))
        with pytest.raises(ValueError):
            derive_stream(0, (-1, 0, 0, 0))


def _results_equal(a, b):
    return (a.threshold == b.threshold
            and a.sensitivity == b.sensitivity
            and a.specificity == b.specificity
            and a.mean_abs_signal_present == b.mean_abs_signal_present
            and a.mean_abs_signal_blank == b.mean_abs_signal_blank)


class TestRunRegime:
    def test_deterministic_across_worker_counts(self):
        cfg = _cfg(**SMALL)
        serial = run_regime(cfg, parallelism=1)
        parallel = run_regime(cfg, parallelism=2)
        assert _results_equal(serial, parallel)

    def test_threshold_independent_of_present_set(self):
        lean = run_regime(_cfg(**SMALL))
        fat = run_regime(_cfg(**{**SMALL, "montecarlo.n_present": 150}))
        assert lean.threshold == fat.threshold

    def test_degenerate_noise_free_blanks(self):
        # no background, no noise: blanks are exactly zero, so theta = 0 and
        # any nonzero occupancy fires every present realization
        cfg = _cfg(**SMALL, **{
            "analyte.c_background": 0.0,
            "noise.enabled": False,
            "analyte.c_target": "0.1aM",
        })
        result = run_regime(cfg)
        assert result.threshold.theta == 0.0
        assert result.sensitivity == 100.0
        assert result.mean_abs_signal_blank == 0.0

    def test_blank_only_regime_mirrors_specificity(self):
        # with no target anywhere, "sensitivity" measures a second blank
        # set's exceedance and must sit near 100 - specificity
        cfg = _cfg(**{"montecarlo.n_blank": 400, "montecarlo.n_present": 400,
                      "analyte.c_target": 0.0})
        result = run_regime(cfg)
        assert result.sensitivity == pytest.approx(100.0 - result.specificity, abs=7.0)

    def test_signal_statistics_scale(self):
        result = run_regime(_cfg(**SMALL))
        assert result.mean_abs_signal_blank == pytest.approx(1.6745e-11, rel=0.01)
        assert result.mean_abs_signal_present == pytest.approx(1.798e-11, rel=0.01)
        assert result.n_present == 60 and result.n_blank == 60

    def test_throughput_guard_full_regime(self):
        started = time.perf_counter()
        run_regime(RegimeConfig())
        elapsed = time.perf_counter() - started
        assert elapsed < 60.0, f"default regime took {elapsed:.1f}s"


class TestSweep:
    def test_one_point_sweep_equals_run_regime(self):
        cfg = _cfg(**SMALL)
        spec = SweepSpec(base=cfg, axes=(("electrolyte.lambda_d", (0.7e-9,)),))
        row = run_sweep(spec)[0]
        assert row.error is None
        assert _results_equal(row.result, run_regime(cfg, regime_index=0))

    def test_row_major_grid(self):
        spec = SweepSpec(base=_cfg(**SMALL), axes=(
            ("electrolyte.lambda_d", tuple(np.linspace(0.7e-9, 1.5e-9, 9))),
            ("interface.d_b", (5e-9, 7e-9, 9e-9)),
        ))
        points = sweep_points(spec)
        assert len(points) == 27
        # first axis outermost: d_b cycles fastest
        assert points[0]["interface.d_b"] == 5e-9
        assert points[1]["interface.d_b"] == 7e-9
        assert points[2]["electrolyte.lambda_d"] == points[0]["electrolyte.lambda_d"]
        assert points[3]["interface.d_b"] == 5e-9
        assert points[3]["electrolyte.lambda_d"] != points[0]["electrolyte.lambda_d"]

    def test_axis_permutation_permutes_rows_not_values(self):
        small = {"montecarlo.n_blank": 20, "montecarlo.n_present": 20}
        a_spec = SweepSpec(base=_cfg(**small), axes=(
            ("electrolyte.lambda_d", (0.7e-9, 1.0e-9)),
            ("interface.d_b", (5e-9, 7e-9)),
        ))
        b_spec = SweepSpec(base=_cfg(**small), axes=(
            ("interface.d_b", (5e-9, 7e-9)),
            ("electrolyte.lambda_d", (0.7e-9, 1.0e-9)),
        ))
        def keyed(rows):
            out = {}
            for row in rows:
                key = (row.point["electrolyte.lambda_d"], row.point["interface.d_b"])
                out[key] = (row.result.sensitivity, row.result.specificity,
                            row.result.mean_abs_signal_present)
            return out
        assert keyed(run_sweep(a_spec)) == keyed(run_sweep(b_spec))

    def test_point_errors_recorded_not_fatal(self):
        spec = SweepSpec(base=_cfg(**SMALL), axes=(
            ("electrolyte.lambda_d", (0.7e-9, -1.0, 1.0e-9)),
        ))
        rows = run_sweep(spec)
        assert rows[0].error is None
        assert "InvariantViolation" in rows[1].error
        assert rows[2].error is None

    def test_replicate_axis(self):
        spec = SweepSpec(base=_cfg(**SMALL), axes=(("replicate", (0, 1)),))
        rows = run_sweep(spec)
        assert rows[0].result.threshold.theta != rows[1].result.threshold.theta

    def test_unknown_axis_key_rejected(self):
        with pytest.raises(MissingKey):
            SweepSpec(base=_cfg(), axes=(("electrolyte.lambbda_d", (1.0,)),))

    def test_empty_axis_rejected(self):
        with pytest.raises(ValueError):
            SweepSpec(base=_cfg(), axes=(("electrolyte.lambda_d", ()),))
        with pytest.raises(ValueError):
            SweepSpec(base=_cfg(), axes=())

    def test_deterministic_across_parallelism(self):
        spec = SweepSpec(base=_cfg(**{"montecarlo.n_blank": 20,
                                      "montecarlo.n_present": 20}),
                         axes=(("electrolyte.lambda_d", (0.7e-9, 1.0e-9, 1.5e-9)),))
        serial = run_sweep(spec, parallelism=1)
        four = run_sweep(spec, parallelism=4)
        for a, b in zip(serial, four):
            assert a.point == b.point
            assert _results_equal(a.result, b.result)
