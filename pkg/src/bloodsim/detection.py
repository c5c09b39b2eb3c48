"""Blank-threshold detection: threshold estimate, decisions, fusion, metrics.

The decision threshold is the limit-of-blank estimate: mean of the blank
shift magnitudes plus 1.645 sample standard deviations, the Gaussian
one-sided 95th percentile.  A sensor fires when its measured shift magnitude
strictly exceeds the threshold; a realization fires when any of its sensors
does (OR fusion).  Sensitivity and specificity are percentages over the
target-present and blank realization sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

BLANK_PERCENTILE_Z = 1.645  # upper one-sided 95th percentile, Gaussian

# Calibration anchor: the regime whose sensitivity pins the flicker constant.
CALIBRATION_ANCHOR = {
    "analyte.c_target": 1.0e-15,     # mol/L
    "electrolyte.lambda_d": 0.7e-9,  # m
    "interface.t_ox": 3.5e-9,        # m
    "interface.d_b": 5.0e-9,         # m
}
CALIBRATION_TARGET_SENSITIVITY = 30.0  # percent
CALIBRATION_TOLERANCE_PP = 5.0
CALIBRATION_K_MIN = 1e-40  # A^2
CALIBRATION_K_MAX = 1e-10  # A^2


class TooFewBlanks(Exception):
    """Threshold estimation needs at least two blank magnitudes."""


class CalibrationOutOfRange(Exception):
    """No flicker constant in the search range reaches the target band."""


@dataclass(frozen=True)
class SensorReading:
    """One sensor's exposure outcome: noise-free shift, noise, decision."""

    delta_i: float    # A, noise-free shift
    eta: float        # A, noise draw
    measured: float   # A, delta_i + eta exactly
    decision: bool


def make_reading(delta_i: float, eta: float, theta: float) -> SensorReading:
    measured = delta_i + eta
    return SensorReading(delta_i=delta_i, eta=eta, measured=measured,
                         decision=decide_sensor(measured, theta))


@dataclass(frozen=True)
class Threshold:
    theta: float       # A, blank_mean + 1.645*blank_std exactly
    blank_mean: float  # A
    blank_std: float   # A, sample estimate (n-1 denominator)
    n_samples: int


@dataclass(frozen=True)
class RegimeResult:
    """Detection metrics and signal statistics for one regime."""

    threshold: Threshold
    sensitivity: float               # percent
    specificity: float               # percent
    mean_abs_signal_present: float   # A, noise-free |shift| mean
    mean_abs_signal_blank: float     # A
    std_abs_signal_present: float    # A, for standard-error bands on the means
    std_abs_signal_blank: float      # A
    n_present: int
    n_blank: int


def estimate_threshold(blank_magnitudes) -> Threshold:
    """Limit-of-blank threshold from pooled blank shift magnitudes."""
    values = np.asarray(blank_magnitudes, dtype=float)
    if values.size < 2:
        raise TooFewBlanks(f"need at least 2 blank magnitudes, got {values.size}")
    if np.any(values < 0):
        raise ValueError("blank magnitudes must be non-negative")
    mean = float(values.mean())
    std = float(values.std(ddof=1))
    return Threshold(theta=mean + BLANK_PERCENTILE_Z * std,
                     blank_mean=mean, blank_std=std, n_samples=int(values.size))


def decide_sensor(measured: float, theta: float) -> bool:
    """Sensor-level detection: |measured| strictly above the threshold."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    return abs(measured) > theta


def fuse_or(decisions) -> bool:
    """Realization-level OR fusion across sensors."""
    decisions = list(decisions)
    if not decisions:
        raise ValueError("need at least one sensor decision")
    return any(decisions)


def compute_metrics(present_decisions, blank_decisions) -> tuple[float, float]:
    """(sensitivity %, specificity %) from realization-level decisions."""
    present = np.asarray(present_decisions, dtype=bool)
    blank = np.asarray(blank_decisions, dtype=bool)
    if present.size == 0 or blank.size == 0:
        raise ValueError("both decision lists must be nonempty")
    sensitivity = 100.0 * float(present.mean())
    specificity = 100.0 * (1.0 - float(blank.mean()))
    return sensitivity, specificity


def anchor_sensitivity(config, k_flicker: float, parallelism: int = 1,
                       replicates: int = 2) -> float:
    """Simulated anchor-point sensitivity (percent) at a flicker constant.

    Pools ``replicates`` independent regime evaluations (distinct stream
    indices, same master seed) to tame the Monte Carlo scatter of a single
    run; this is the estimator the calibration accepts on.
    """
    from .engine import run_regime  # deferred: engine imports this module
    from .params import apply_overrides

    anchor = apply_overrides(config, CALIBRATION_ANCHOR)
    cfg = replace(anchor, noise=replace(anchor.noise, k_flicker=k_flicker,
                                        enabled=True))
    values = [run_regime(cfg, parallelism=parallelism, regime_index=r).sensitivity
              for r in range(replicates)]
    return sum(values) / len(values)


def calibrate_flicker(config, target_sensitivity: float = CALIBRATION_TARGET_SENSITIVITY,
                      tolerance_pp: float = CALIBRATION_TOLERANCE_PP,
                      k_min: float = CALIBRATION_K_MIN,
                      k_max: float = CALIBRATION_K_MAX,
                      parallelism: int = 1,
                      replicates: int = 2,
                      max_iterations: int = 60) -> float:
    """Pin the flicker constant against the anchor regime's sensitivity.

    Runs a bisection over log k_flicker at the anchor point (1 fM target,
    lambda_d = 0.7 nm, t_ox = 3.5 nm, d_b = 5 nm) until the simulated
    sensitivity lands within ``tolerance_pp`` of ``target_sensitivity``
    (percent).  Sensitivity is monotone non-increasing in k_flicker: more
    noise inflates the blank threshold and scatters present readings.
    """

    def sensitivity_at(k: float) -> float:
        return anchor_sensitivity(config, k, parallelism=parallelism,
                                  replicates=replicates)

    lo, hi = k_min, k_max
    s_lo = sensitivity_at(lo)
    if abs(s_lo - target_sensitivity) <= tolerance_pp:
        return lo
    if s_lo < target_sensitivity - tolerance_pp:
        raise CalibrationOutOfRange(
            f"sensitivity at k_flicker={lo:g} is {s_lo:.2f}%, already below the "
            f"{target_sensitivity:.2f}% +/- {tolerance_pp:.2f}pp band"
        )
    s_hi = sensitivity_at(hi)
    if abs(s_hi - target_sensitivity) <= tolerance_pp:
        return hi
    if s_hi > target_sensitivity + tolerance_pp:
        raise CalibrationOutOfRange(
            f"sensitivity at k_flicker={hi:g} is {s_hi:.2f}%, still above the "
            f"{target_sensitivity:.2f}% +/- {tolerance_pp:.2f}pp band"
        )
    for _ in range(max_iterations):
        mid = math.sqrt(lo * hi)
        s_mid = sensitivity_at(mid)
        if abs(s_mid - target_sensitivity) <= tolerance_pp:
            return mid
        if s_mid > target_sensitivity:
            lo = mid
        else:
            hi = mid
    raise CalibrationOutOfRange(
        f"bisection did not land in the band within {max_iterations} steps "
        f"(final interval [{lo:g}, {hi:g}] A^2)"
    )
