"""Operating point, lumped interface capacitances, and the intrinsic noise model.

The noise model is a flat thermal PSD plus a 1/f flicker term, integrated in
closed form over the measurement band to give the rms of the Gaussian current
noise added to every sensor reading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import BOLTZMANN, VACUUM_PERMITTIVITY
from .params import RegimeConfig


@dataclass(frozen=True)
class OperatingPoint:
    """Fixed-bias operating point; current shifts ride on i_d0 through g_m."""

    i_d0: float
    g_m: float
    v_sg: float
    v_sd: float


@dataclass(frozen=True)
class CapacitanceStack:
    """Oxide and double-layer areal capacitances with their series combination."""

    c_ox: float   # F/m^2
    c_dl: float   # F/m^2
    c_eff: float  # F/m^2


@dataclass(frozen=True)
class NoiseModel:
    """Band-limited current-noise model.

    i_n_rms^2 = s_thermal*(f_max - f_min) + k_flicker*ln(f_max/f_min).
    """

    s_thermal: float            # A^2/Hz, flat level
    k_flicker: float            # A^2, 1/f magnitude (PSD = k_flicker/f)
    band: tuple[float, float]   # (f_min, f_max) in Hz
    i_n_rms: float              # A


def operating_point(config: RegimeConfig) -> OperatingPoint:
    return OperatingPoint(i_d0=config.i_d0, g_m=config.g_m,
                          v_sg=config.v_sg, v_sd=config.v_sd)


def build_capacitances(config: RegimeConfig) -> CapacitanceStack:
    """Areal oxide and double-layer capacitances and their series value."""
    c_ox = VACUUM_PERMITTIVITY * config.eps_oxide_rel / config.t_ox
    c_dl = VACUUM_PERMITTIVITY * config.eps_electrolyte_rel / config.lambda_d
    c_eff = c_ox * c_dl / (c_ox + c_dl)
    return CapacitanceStack(c_ox=c_ox, c_dl=c_dl, c_eff=c_eff)


def _band_rms(s_thermal: float, k_flicker: float, f_min: float, f_max: float) -> float:
    return math.sqrt(s_thermal * (f_max - f_min)
                     + k_flicker * math.log(f_max / f_min))


def build_noise_model(config: RegimeConfig) -> NoiseModel:
    """Assemble the noise model from config; disabled noise is silent."""
    if config.noise.enabled:
        s_thermal = (4.0 * BOLTZMANN * config.temperature
                     * config.noise.gamma_thermal * config.g_m)
        k_flicker = config.noise.k_flicker
    else:
        s_thermal = 0.0
        k_flicker = 0.0
    band = (config.f_min, config.f_max)
    return NoiseModel(s_thermal=s_thermal, k_flicker=k_flicker, band=band,
                      i_n_rms=_band_rms(s_thermal, k_flicker, *band))


def psd_thermal(model: NoiseModel) -> float:
    """Flat thermal PSD level (A^2/Hz), frequency independent."""
    return model.s_thermal


def psd_flicker(model: NoiseModel, f):
    """1/f PSD at frequency f (scalar or array), A^2/Hz."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("flicker PSD requires f > 0")
    out = model.k_flicker / f
    return float(out) if out.ndim == 0 else out


def integrate_noise(model: NoiseModel) -> float:
    """Closed-form band-integrated rms current noise (A)."""
    return _band_rms(model.s_thermal, model.k_flicker, *model.band)


def sample_noise(model: NoiseModel, rng: np.random.Generator) -> float:
    """One zero-mean Gaussian noise draw with the band-integrated rms."""
    return float(rng.normal(0.0, model.i_n_rms))


def crossover_frequency(model: NoiseModel) -> float:
    """Frequency below which the flicker PSD exceeds the thermal PSD."""
    if model.k_flicker == 0.0:
        return 0.0
    if model.s_thermal == 0.0:
        return math.inf
    return model.k_flicker / model.s_thermal
