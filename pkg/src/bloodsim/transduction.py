"""Debye-screened conversion of bound charge into drain-current shifts.

Each bound fragment contributes an unscreened surface-potential shift
z*q*n_bp/(A*C_eff); the whole sum is attenuated by one screening factor
exp(-d_eff/lambda_d) with d_eff = t_ox + d_b, and converted to current
through the operating-point transconductance.  With the charge multipliers
positive the shift carries one fixed sign; detection uses the magnitude, so
the physical polarity of DNA charge is absorbed into the absolute value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import ELEMENTARY_CHARGE
from .device import CapacitanceStack
from .occupancy import BoundFragment, BoundPopulation
from .params import RegimeConfig, derived_area


@dataclass(frozen=True)
class SignalShift:
    """Per-class and total noise-free drain-current shifts for one reading."""

    delta_i_target: float      # A
    delta_i_background: float  # A
    delta_i_total: float       # A, exactly target + background
    alpha: float               # screening factor in (0, 1]
    d_eff: float               # m, t_ox + d_b

    @property
    def magnitude(self) -> float:
        return abs(self.delta_i_total)


def screening_factor(lambda_d: float, d_eff: float) -> float:
    """exp(-d_eff/lambda_d); 1 at zero separation."""
    if lambda_d <= 0:
        raise ValueError("lambda_d must be positive")
    if d_eff < 0:
        raise ValueError("d_eff must be non-negative")
    return math.exp(-d_eff / lambda_d)


def potential_shift(fragment: BoundFragment, area: float, c_eff: float) -> float:
    """Unscreened surface-potential shift of one bound fragment (V)."""
    if area <= 0 or c_eff <= 0:
        raise ValueError("area and c_eff must be positive")
    return fragment.z * ELEMENTARY_CHARGE * fragment.n_bp / (area * c_eff)


def compute_shift(population: BoundPopulation, config: RegimeConfig,
                  capacitances: CapacitanceStack) -> SignalShift:
    """Screened current shift of a bound population, split by class."""
    d_eff = config.t_ox + config.d_b
    alpha = screening_factor(config.lambda_d, d_eff)
    area = derived_area(config)
    scale = config.g_m * alpha * ELEMENTARY_CHARGE / (area * capacitances.c_eff)
    delta_t = scale * population.z_target * population.target_bp_total
    delta_c = scale * population.z_background * population.background_bp_total
    return SignalShift(delta_i_target=delta_t, delta_i_background=delta_c,
                       delta_i_total=delta_t + delta_c, alpha=alpha, d_eff=d_eff)
