"""Command-line surface: run regimes, reproduce the result-figure sweeps,
emit noise PSD tables, and calibrate the flicker constant.

Subcommands
    run         one regime -> one-row CSV/JSON table + manifest
    sweep       recipe or custom axes -> multi-row table + manifest
    noise-psd   thermal/flicker PSD over a log frequency grid
    calibrate   pin the flicker constant; writes a manifest for later runs

Exit codes: 0 success, 2 configuration error, 3 runtime error,
4 calibration out of range.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .detection import CalibrationOutOfRange, calibrate_flicker
from .device import build_noise_model, psd_flicker, psd_thermal
from .engine import (REPLICATE_AXIS, SweepSpec, build_manifest, run_regime,
                     run_sweep, sweep_points)
from .params import (ConfigError, KEY_TABLE, MissingKey, RegimeConfig,
                     apply_overrides, coerce_key_value, load_config)

SEED_ENV_VAR = "BLOODSIM_SEED"
FLOAT_FORMAT = "%.9g"

RECIPE_NAMES = ("fig3", "fig4", "fig5", "fig6")
# recipe -> (csv column, source) where source is an axis key or a result field
_RECIPE_COLUMNS = {
    "fig3": (("lambda_d", "electrolyte.lambda_d"),
             ("d_b", "interface.d_b"),
             ("mean_abs_delta_i", "@mean_abs_signal_present")),
    "fig4": (("lambda_d", "electrolyte.lambda_d"),
             ("c_target", "analyte.c_target"),
             ("sensitivity", "@sensitivity")),
    "fig5": (("t_ox", "interface.t_ox"),
             ("d_b", "interface.d_b"),
             ("c_target", "analyte.c_target"),
             ("sensitivity", "@sensitivity")),
    "fig6": (("t_ox", "interface.t_ox"),
             ("specificity", "@specificity")),
}

_RESULT_FIELDS = {
    "@theta": lambda r: r.threshold.theta,
    "@sensitivity": lambda r: r.sensitivity,
    "@specificity": lambda r: r.specificity,
    "@mean_abs_signal_present": lambda r: r.mean_abs_signal_present,
    "@mean_abs_signal_blank": lambda r: r.mean_abs_signal_blank,
}


class OutputTable:
    """Rectangular numeric table emitted as CSV (RFC 4180) or JSON.

    Numbers are serialized with 9 significant digits in both formats, so the
    two emissions of one run are value-equal.
    """

    def __init__(self, header: list[str], rows: list[list]):
        self.header = list(header)
        self.rows = [list(row) for row in rows]

    @staticmethod
    def _cell(value) -> str:
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if isinstance(value, (float, np.floating)):
            return FLOAT_FORMAT % float(value)
        return str(value)

    def to_csv(self) -> str:
        import csv
        import io
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(self.header)
        for row in self.rows:
            writer.writerow([self._cell(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        def native(value):
            if value is None or isinstance(value, (str, bool)):
                return value
            if isinstance(value, (int, np.integer)):
                return int(value)
            return float(FLOAT_FORMAT % float(value))
        payload = {
            "header": self.header,
            "rows": [[native(v) for v in row] for row in self.rows],
        }
        return json.dumps(payload, indent=2) + "\n"

    def write(self, path: Path, fmt: str) -> Path:
        path = path.with_suffix(".json" if fmt == "json" else ".csv")
        text = self.to_json() if fmt == "json" else self.to_csv()
        path.write_text(text, encoding="utf-8")
        return path


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (dotted keys)")
    parser.add_argument("--set", dest="sets", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    parser.add_argument("--seed", type=int, default=None,
                        help=f"master seed (falls back to ${SEED_ENV_VAR})")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--parallelism", type=int, default=1, metavar="N")
    parser.add_argument("--manifest", default=None,
                        help="manifest JSON from a calibrate run; applies its "
                             "calibrated constants")
    parser.add_argument("--assume-si", action="store_true",
                        help="accept bare numbers for suffixed quantities")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bloodsim",
        description="Monte Carlo BioFET ctDNA whole-blood detection simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one regime")
    _add_common_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--recipe", choices=RECIPE_NAMES, default=None,
                         help="checked-in figure sweep")
    p_sweep.add_argument("--spec", default=None,
                         help="sweep-spec JSON file (base + axes)")
    p_sweep.add_argument("--axis", dest="axes", action="append", default=[],
                         metavar="KEY=V1,V2,...",
                         help="custom sweep axis; repeatable")

    p_psd = sub.add_parser("noise-psd", help="emit the noise PSD table")
    _add_common_flags(p_psd)
    p_psd.add_argument("--points", type=int, default=200,
                       help="log-spaced grid size (default 200)")

    p_cal = sub.add_parser("calibrate", help="calibrate the flicker constant")
    _add_common_flags(p_cal)
    p_cal.add_argument("--target-sensitivity", type=float, default=0.30,
                       metavar="FRACTION",
                       help="anchor-point sensitivity target (default 0.30)")
    p_cal.add_argument("--tolerance-pp", type=float, default=5.0,
                       help="acceptance band around the target, percentage points")
    return parser


def _resolve_seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"${SEED_ENV_VAR} must be an integer, got {env!r}")
    return None


def _load_manifest_constants(path: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"manifest file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: {exc}")
    calibrated = payload.get("calibrated", {})
    if not isinstance(calibrated, dict):
        raise ConfigError(f"manifest {path} has a malformed 'calibrated' block")
    return calibrated


def _parse_set_overrides(args) -> dict:
    overrides = {}
    for item in args.sets:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _build_config(args) -> RegimeConfig:
    config = load_config(args.config, assume_si=args.assume_si) \
        if args.config else RegimeConfig()
    if args.manifest:
        config = apply_overrides(config, _load_manifest_constants(args.manifest),
                                 assume_si=True)
    overrides = _parse_set_overrides(args)
    if overrides:
        config = apply_overrides(config, overrides, assume_si=args.assume_si)
    seed = _resolve_seed(args)
    if seed is not None:
        config = apply_overrides(config, {"montecarlo.master_seed": seed})
    return config


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, config, calibrated=None, wall_time_s=None) -> Path:
    manifest = build_manifest(config, calibrated=calibrated, wall_time_s=wall_time_s)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


RUN_HEADER = [
    "c_target_mol_l", "c_background_mol_l", "lambda_d_m", "t_ox_m", "d_b_m",
    "m_sensors", "n_blank", "n_present", "master_seed",
    "theta_a", "sensitivity_pct", "specificity_pct",
    "mean_abs_delta_i_present_a", "mean_abs_delta_i_blank_a",
]


def _cmd_run(args) -> int:
    config = _build_config(args)
    started = time.perf_counter()
    result = run_regime(config, parallelism=max(1, args.parallelism))
    wall = time.perf_counter() - started
    table = OutputTable(RUN_HEADER, [[
        config.c_target, config.c_background, config.lambda_d, config.t_ox,
        config.d_b, config.m_sensors, config.n_blank, config.n_present,
        config.master_seed, result.threshold.theta, result.sensitivity,
        result.specificity, result.mean_abs_signal_present,
        result.mean_abs_signal_blank,
    ]])
    out = _out_dir(args)
    table_path = table.write(out / "run", args.format)
    _write_manifest(out, config, wall_time_s=wall)
    print(f"run: sensitivity {result.sensitivity:.2f}%, "
          f"specificity {result.specificity:.2f}%, "
          f"theta {result.threshold.theta:.6g} A -> {table_path}")
    return 0


def _load_recipe(name: str) -> dict:
    text = resources.files("bloodsim.recipes").joinpath(f"{name}.json") \
        .read_text(encoding="utf-8")
    return json.loads(text)


def _coerce_axis(key: str, values, assume_si: bool) -> tuple:
    if key == REPLICATE_AXIS:
        return tuple(int(v) for v in values)
    return tuple(coerce_key_value(key, v, assume_si=assume_si) for v in values)


def _sweep_spec_from_args(args, config: RegimeConfig) -> tuple[str, SweepSpec]:
    # user --set overrides stay on top of a recipe's or spec file's base
    sets = _parse_set_overrides(args)
    if args.recipe:
        recipe = _load_recipe(args.recipe)
        base = apply_overrides(config, recipe.get("base", {}), assume_si=True)
        if sets:
            base = apply_overrides(base, sets, assume_si=args.assume_si)
        axes = tuple((key, _coerce_axis(key, values, True))
                     for key, values in recipe["axes"])
        return args.recipe, SweepSpec(base=base, axes=axes)
    if args.spec:
        try:
            payload = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"sweep spec not found: {args.spec}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"sweep spec {args.spec} is not valid JSON: {exc}")
        base = apply_overrides(config, payload.get("base", {}),
                               assume_si=args.assume_si)
        if sets:
            base = apply_overrides(base, sets, assume_si=args.assume_si)
        axes = tuple((key, _coerce_axis(key, values, args.assume_si))
                     for key, values in payload.get("axes", []))
        if not axes:
            raise ConfigError(f"sweep spec {args.spec} defines no axes")
        return payload.get("name", "sweep"), SweepSpec(base=base, axes=axes)
    if args.axes:
        axes = []
        for item in args.axes:
            if "=" not in item:
                raise ConfigError(f"--axis expects KEY=V1,V2,..., got {item!r}")
            key, values = item.split("=", 1)
            key = key.strip()
            parts = tuple(v.strip() for v in values.split(",") if v.strip())
            if not parts:
                raise ConfigError(f"axis {key!r} has no values")
            axes.append((key, _coerce_axis(key, parts, args.assume_si)))
        return "sweep", SweepSpec(base=config, axes=tuple(axes))
    raise ConfigError("sweep needs --recipe, --spec, or at least one --axis")


def _axis_si(key: str, value):
    """Axis value in SI units for table output."""
    if key == REPLICATE_AXIS:
        return int(value)
    return coerce_key_value(key, value, assume_si=True)


def _sweep_table(name: str, spec: SweepSpec, rows) -> OutputTable:
    mapped = _RECIPE_COLUMNS.get(name)
    if mapped is not None:
        header = [label for label, _ in mapped] + ["error"]
        out_rows = []
        for row in rows:
            cells = []
            for _, source in mapped:
                if source.startswith("@"):
                    cells.append(None if row.result is None
                                 else _RESULT_FIELDS[source](row.result))
                else:
                    cells.append(_axis_si(source, row.point[source]))
            cells.append(row.error or "")
            out_rows.append(cells)
        return OutputTable(header, out_rows)
    axis_keys = [key for key, _ in spec.axes]
    header = axis_keys + ["theta", "sensitivity", "specificity",
                          "mean_abs_delta_i_present", "mean_abs_delta_i_blank",
                          "error"]
    out_rows = []
    for row in rows:
        cells = [_axis_si(key, row.point[key]) for key in axis_keys]
        if row.result is None:
            cells += [None, None, None, None, None]
        else:
            r = row.result
            cells += [r.threshold.theta, r.sensitivity, r.specificity,
                      r.mean_abs_signal_present, r.mean_abs_signal_blank]
        cells.append(row.error or "")
        out_rows.append(cells)
    return OutputTable(header, out_rows)


def _cmd_sweep(args) -> int:
    config = _build_config(args)
    name, spec = _sweep_spec_from_args(args, config)
    total = len(sweep_points(spec))

    def progress(row):
        status = row.error or "ok"
        print(f"[{row.index + 1}/{total}] {row.point} -> {status}",
              file=sys.stderr)

    started = time.perf_counter()
    rows = run_sweep(spec, parallelism=max(1, args.parallelism),
                     progress=progress)
    wall = time.perf_counter() - started
    table = _sweep_table(name, spec, rows)
    out = _out_dir(args)
    table_path = table.write(out / name, args.format)
    _write_manifest(out, spec.base, wall_time_s=wall)
    failures = sum(1 for row in rows if row.error)
    print(f"sweep {name}: {total} points, {failures} failed -> {table_path}")
    return 0


def _cmd_noise_psd(args) -> int:
    config = _build_config(args)
    if args.points < 2:
        raise ConfigError("--points must be at least 2")
    model = build_noise_model(config)
    grid = np.logspace(np.log10(config.f_min), np.log10(config.f_max),
                       args.points)
    grid[0] = config.f_min
    grid[-1] = config.f_max
    thermal = np.full_like(grid, psd_thermal(model))
    flicker = psd_flicker(model, grid) if model.k_flicker > 0 \
        else np.zeros_like(grid)
    table = OutputTable(
        ["frequency_hz", "psd_thermal_a2hz", "psd_flicker_a2hz", "psd_total_a2hz"],
        [[f, t, fl, t + fl] for f, t, fl in zip(grid, thermal, flicker)])
    out = _out_dir(args)
    table_path = table.write(out / "noise_psd", args.format)
    print(f"noise-psd: {args.points} points, rms {model.i_n_rms:.6g} A "
          f"-> {table_path}")
    return 0


def _cmd_calibrate(args) -> int:
    config = _build_config(args)
    started = time.perf_counter()
    k = calibrate_flicker(config,
                          target_sensitivity=100.0 * args.target_sensitivity,
                          tolerance_pp=args.tolerance_pp,
                          parallelism=max(1, args.parallelism))
    wall = time.perf_counter() - started
    calibrated_config = apply_overrides(config, {"noise.k_flicker": k})
    out = _out_dir(args)
    manifest_path = _write_manifest(out, calibrated_config,
                                    calibrated={"noise.k_flicker": k},
                                    wall_time_s=wall)
    print(f"calibrated k_flicker = {k:.9g} A^2 -> {manifest_path}")
    return 0


_HANDLERS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "noise-psd": _cmd_noise_psd,
    "calibrate": _cmd_calibrate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except CalibrationOutOfRange as exc:
        print(f"error: calibration out of range: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, MissingKey) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures must not traceback to the shell
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
