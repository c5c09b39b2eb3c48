"""Monte Carlo orchestration: seeded streams, regime runs, parameter sweeps.

Every random draw in a run is tied to a stream derived from
(master_seed, regime index, realization code, sensor index, purpose tag), so
results are bit-identical for a fixed master seed at any worker count, and
regenerating one stage or one realization set never perturbs the others.
Blank realizations use codes [0, n_blank); target-present realizations are
offset by 2^30 so the two sets draw from disjoint streams.  Blank runs force
the target concentration to zero and keep the background concentration.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .detection import RegimeResult, compute_metrics, estimate_threshold
from .device import build_capacitances, build_noise_model, sample_noise
from .occupancy import assign_sites, draw_exposure
from .params import KEY_TABLE, RegimeConfig, apply_overrides, config_to_overrides
from .transduction import compute_shift

PURPOSE_EXPOSURE = 0
PURPOSE_WEIGHTS = 1
PURPOSE_LENGTHS = 2
PURPOSE_NOISE = 3

_PRESENT_CODE_BASE = 1 << 30
_PATH_COMPONENT_LIMIT = 1 << 32
REPLICATE_AXIS = "replicate"


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream addressed by (master_seed, path)."""

    master_seed: int
    path: tuple[int, ...]

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence((self.master_seed, *self.path))
        return np.random.Generator(np.random.PCG64(seq))


def derive_stream(master_seed: int, path) -> RngStream:
    """Derive an independent stream for a path of small integer components."""
    path = tuple(int(p) for p in path)
    for component in path:
        if not (0 <= component < _PATH_COMPONENT_LIMIT):
            raise ValueError(f"path component {component} out of [0, 2^32)")
    return RngStream(master_seed=int(master_seed), path=path)


def _reading(config, caps, noise, regime_index, realization_code, sensor):
    """One sensor-exposure: returns (noise-free shift, measured shift)."""
    seed = config.master_seed

    def gen(purpose):
        return derive_stream(
            seed, (regime_index, realization_code, sensor, purpose)
        ).generator()

    draw = draw_exposure(config, gen(PURPOSE_EXPOSURE))
    population = assign_sites(draw, config, gen(PURPOSE_WEIGHTS), gen(PURPOSE_LENGTHS))
    shift = compute_shift(population, config, caps)
    eta = sample_noise(noise, gen(PURPOSE_NOISE)) if noise.i_n_rms > 0 else 0.0
    return shift.delta_i_total, shift.delta_i_total + eta


def _reading_block(args):
    """Worker task: readings for realization codes [start, stop)."""
    config, regime_index, code_base, start, stop = args
    caps = build_capacitances(config)
    noise = build_noise_model(config)
    m = config.m_sensors
    delta = np.empty((stop - start, m))
    measured = np.empty((stop - start, m))
    for row, realization in enumerate(range(start, stop)):
        for sensor in range(m):
            d, meas = _reading(config, caps, noise, regime_index,
                               code_base + realization, sensor)
            delta[row, sensor] = d
            measured[row, sensor] = meas
    return delta, measured


def _collect(config, regime_index, code_base, n_realizations, parallelism):
    if parallelism <= 1:
        return _reading_block((config, regime_index, code_base, 0, n_realizations))
    chunk = max(1, -(-n_realizations // (parallelism * 4)))
    tasks = [
        (config, regime_index, code_base, start, min(start + chunk, n_realizations))
        for start in range(0, n_realizations, chunk)
    ]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        blocks = list(pool.map(_reading_block, tasks))
    delta = np.concatenate([b[0] for b in blocks], axis=0)
    measured = np.concatenate([b[1] for b in blocks], axis=0)
    return delta, measured


def run_regime(config: RegimeConfig, parallelism: int = 1,
               regime_index: int = 0) -> RegimeResult:
    """Run one regime: blanks, threshold, target-present trials, metrics."""
    if config.n_blank >= _PRESENT_CODE_BASE or config.n_present >= _PRESENT_CODE_BASE:
        raise ValueError("realization counts must stay below 2^30")
    blank_config = replace(config, c_target=0.0)
    blank_delta, blank_measured = _collect(
        blank_config, regime_index, 0, config.n_blank, parallelism)
    present_delta, present_measured = _collect(
        config, regime_index, _PRESENT_CODE_BASE, config.n_present, parallelism)

    threshold = estimate_threshold(np.abs(blank_measured).ravel())
    blank_fired = (np.abs(blank_measured) > threshold.theta).any(axis=1)
    present_fired = (np.abs(present_measured) > threshold.theta).any(axis=1)
    sensitivity, specificity = compute_metrics(present_fired, blank_fired)

    abs_present = np.abs(present_delta)
    abs_blank = np.abs(blank_delta)
    return RegimeResult(
        threshold=threshold,
        sensitivity=sensitivity,
        specificity=specificity,
        mean_abs_signal_present=float(abs_present.mean()),
        mean_abs_signal_blank=float(abs_blank.mean()),
        std_abs_signal_present=float(abs_present.std(ddof=1)) if abs_present.size > 1 else 0.0,
        std_abs_signal_blank=float(abs_blank.std(ddof=1)) if abs_blank.size > 1 else 0.0,
        n_present=config.n_present,
        n_blank=config.n_blank,
    )


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian sweep: a base config plus (key, values) axes.

    Keys are documented config keys; the pseudo-key "replicate" adds rows
    that rerun the same point under fresh regime indices (fresh streams).
    """

    base: RegimeConfig
    axes: tuple[tuple[str, tuple], ...]

    def __post_init__(self):
        if not self.axes:
            raise ValueError("sweep needs at least one axis")
        normalized = []
        for key, values in self.axes:
            if key != REPLICATE_AXIS and key not in KEY_TABLE:
                from .params import MissingKey
                raise MissingKey(f"{key!r} is not a documented configuration key")
            values = tuple(values)
            if not values:
                raise ValueError(f"axis {key!r} has no values")
            normalized.append((key, values))
        object.__setattr__(self, "axes", tuple(normalized))


@dataclass(frozen=True)
class SweepRow:
    """One sweep point: axis values, its result, or the error that stopped it."""

    index: int
    point: dict
    result: RegimeResult | None
    error: str | None


def sweep_points(spec: SweepSpec) -> list[dict]:
    """Row-major Cartesian product of the axes (first axis outermost)."""
    keys = [key for key, _ in spec.axes]
    grids = [values for _, values in spec.axes]
    return [dict(zip(keys, combo)) for combo in itertools.product(*grids)]


def _sweep_task(args):
    base, index, point = args
    try:
        overrides = {k: v for k, v in point.items() if k != REPLICATE_AXIS}
        config = apply_overrides(base, overrides)
        # The stream index depends on the point itself (its replicate tag),
        # never on row position: permuting axes permutes rows, not values,
        # and a one-point sweep reproduces run_regime exactly.  Points that
        # differ only in swept physics share draws (paired common random
        # numbers across the sweep).
        stream_index = int(point.get(REPLICATE_AXIS, 0))
        return SweepRow(index=index, point=point,
                        result=run_regime(config, regime_index=stream_index),
                        error=None)
    except Exception as exc:  # a bad point must not abort the sweep
        return SweepRow(index=index, point=point, result=None,
                        error=f"{type(exc).__name__}: {exc}")


def run_sweep(spec: SweepSpec, parallelism: int = 1,
              progress=None) -> list[SweepRow]:
    """Evaluate every sweep point; output order is row-major over the axes."""
    points = sweep_points(spec)
    tasks = [(spec.base, i, point) for i, point in enumerate(points)]
    if parallelism <= 1:
        rows = []
        for task in tasks:
            row = _sweep_task(task)
            rows.append(row)
            if progress is not None:
                progress(row)
        return rows
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        rows = list(pool.map(_sweep_task, tasks))
    if progress is not None:
        for row in rows:
            progress(row)
    return rows


def build_manifest(config: RegimeConfig, calibrated: dict | None = None,
                   wall_time_s: float | None = None) -> dict:
    """Reproducibility record: config snapshot, constants, seed, version."""
    return {
        "version": __version__,
        "master_seed": config.master_seed,
        "config": config_to_overrides(config),
        "calibrated": calibrated or {},
        "wall_time_s": wall_time_s if wall_time_s is not None else 0.0,
        "created_unix": time.time(),
    }
