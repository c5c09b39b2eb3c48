"""Monte Carlo simulator for BioFET ctDNA detection in whole blood."""

__version__ = "0.1.0"

from .params import (  # noqa: F401
    ConfigError,
    DimensionMismatch,
    InvariantViolation,
    MalformedNumber,
    MissingKey,
    NoiseParams,
    ParseError,
    RegimeConfig,
    UnknownUnit,
    apply_overrides,
    build_config,
    derived_area,
    format_quantity,
    load_config,
    parse_quantity,
)
from .device import (  # noqa: F401
    CapacitanceStack,
    NoiseModel,
    OperatingPoint,
    build_capacitances,
    build_noise_model,
    crossover_frequency,
    integrate_noise,
    operating_point,
    psd_flicker,
    psd_thermal,
    sample_noise,
)
from .occupancy import (  # noqa: F401
    BoundFragment,
    BoundPopulation,
    ConfigTooLarge,
    ExposureDraw,
    assign_sites,
    assign_sites_batched,
    assign_sites_exact,
    draw_exposure,
    expected_counts,
    site_count,
)
from .transduction import (  # noqa: F401
    SignalShift,
    compute_shift,
    potential_shift,
    screening_factor,
)
from .detection import (  # noqa: F401
    CalibrationOutOfRange,
    RegimeResult,
    SensorReading,
    Threshold,
    TooFewBlanks,
    calibrate_flicker,
    compute_metrics,
    decide_sensor,
    estimate_threshold,
    fuse_or,
)
from .engine import (  # noqa: F401
    RngStream,
    SweepRow,
    SweepSpec,
    build_manifest,
    derive_stream,
    run_regime,
    run_sweep,
    sweep_points,
)
