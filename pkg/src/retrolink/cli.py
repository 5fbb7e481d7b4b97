"""Command-line front end.

Subcommands write plain files into ``--out`` (a directory):

``converge``
    ``trace.csv`` with columns ``iteration, p_t_w, p_r_w, eta_d, loss_w, gain_w``
    and ``metrics.json`` (LinkMetrics fields plus ``converged``,
    ``divergence_flag``, ``status``).
``sweep --axis distance|angle|array-size``
    ``sweep_<axis>.csv`` with ``value, status`` followed by the LinkMetrics
    columns (powers in watts; ``--dbm`` appends dBm columns).
``field-map``
    ``field_map_iter_<k>.txt`` per checkpoint: a ``#`` header (iteration,
    extent, samples, peak watts) and the peak-normalized power matrix.
``dmax`` / ``fov`` / ``calibrate-psat``
    ``dmax.json``; ``fov.json`` plus the angle sweep CSV;
    ``calibration.json`` plus ``calibrated.cfg``.

Exit codes: 0 success, 2 configuration error, 3 divergence,
4 calibration failure, 5 other analysis failure (bracket, empty FoV,
inconclusive beamwidth).
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import fields

import numpy as np

from . import analysis
from .config import ScenarioConfig, dump_config, load_config, parse_config_text
from .errors import (BracketError, CalibrationError, ConfigError, DivergenceError, EmptyFovError,
                     InconclusiveBeamwidthError)
from .power_cycle import run_to_convergence
from .swipt import LinkMetrics, watts_to_dbm

log = logging.getLogger("retrolink")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_CALIBRATION = 4
EXIT_ANALYSIS = 5

TRACE_COLUMNS = ("iteration", "p_t_w", "p_r_w", "eta_d", "loss_w", "gain_w")
METRIC_COLUMNS = tuple(f.name for f in fields(LinkMetrics))
_AXES = {"distance": "distance_m", "angle": "angle_deg", "array-size": "array_size"}


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _metrics_payload(metrics, status, trace):
    payload = metrics.as_dict()
    payload.update(status=status, converged=trace.converged, divergence_flag=trace.divergence_flag)
    return payload


# ---- subcommands -----------------------------------------------------------------


def cmd_converge(cfg: ScenarioConfig, out: str, timing: bool = False) -> int:
    start = time.perf_counter()
    trace, status, metrics = analysis.evaluate(cfg)
    _write_csv(os.path.join(out, "trace.csv"), TRACE_COLUMNS, trace.rows())
    payload = _metrics_payload(metrics, status, trace)
    if timing:
        payload["wall_time_s"] = time.perf_counter() - start
    _write_json(os.path.join(out, "metrics.json"), payload)
    log.info("converge: %s after %d iterations, P_r = %.6g W", status, trace.iterations, metrics.p_r)
    return EXIT_DIVERGENCE if trace.divergence_flag else EXIT_OK


def sweep_rows(result, dbm: bool = False):
    header = ["value", "status", *METRIC_COLUMNS]
    if dbm:
        header += ["p_r_dbm", "p_ch_dbm"]
    rows = []
    for p in result.points:
        m = p.metrics.as_dict()
        row = [p.value, p.status, *(m[c] for c in METRIC_COLUMNS)]
        if dbm:
            with np.errstate(divide="ignore"):
                row += [float(watts_to_dbm(m["p_r"])), float(watts_to_dbm(m["p_ch"]))]
        rows.append(row)
    return header, rows


def run_sweep(cfg: ScenarioConfig, axis: str, jobs: int = 1, distance=None):
    if axis == "distance":
        return analysis.sweep_distance(cfg, jobs=jobs)
    if axis == "angle":
        return analysis.sweep_angle(cfg, distance=distance, jobs=jobs)
    if axis == "array-size":
        return analysis.sweep_array_size(cfg, jobs=jobs)
    raise ConfigError(f"unknown sweep axis {axis!r}")


def cmd_sweep(cfg, out, axis, jobs=1, distance=None, dbm=False) -> int:
    result = run_sweep(cfg, axis, jobs, distance)
    header, rows = sweep_rows(result, dbm)
    header[0] = _AXES[axis]
    _write_csv(os.path.join(out, f"sweep_{axis.replace('-', '_')}.csv"), header, rows)
    diverged = sum(p.status == "diverged" for p in result.points)
    if diverged:
        log.warning("sweep: %d of %d points diverged", diverged, len(result.points))
    return EXIT_OK


def write_field_map(path, fmap, iteration):
    g = fmap.grid
    header = (f"iteration = {iteration}\nextent_m = {-g.half_extent!r}, {g.half_extent!r}\n"
              f"samples = {g.samples}\npeak_w = {fmap.peak!r}\n"
              f"peak_index_v_u = {fmap.peak_index[0]}, {fmap.peak_index[1]}")
    np.savetxt(path, fmap.normalized(), fmt="%.17g", header=header)


def read_field_map(path):
    """Inverse of :func:`write_field_map`: ``(header dict, normalized matrix)``."""
    header = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition("=")
            header[key.strip()] = value.strip()
    return header, np.loadtxt(path)


def cmd_field_map(cfg, out, checkpoints=None, samples=None) -> int:
    wanted = list(cfg.checkpoints if checkpoints is None else checkpoints)
    if wanted != sorted(wanted) or any(k < 1 for k in wanted):
        raise ConfigError("checkpoints must be positive and sorted ascending")
    kept = [k for k in wanted if k <= cfg.max_iterations]
    if len(kept) < len(wanted):
        log.warning("field-map: checkpoints beyond max_iterations=%d dropped: %s", cfg.max_iterations,
                    ", ".join(str(k) for k in wanted if k > cfg.max_iterations))
    snapshots = {}

    def keep(state):
        if state.iteration in kept:
            snapshots[state.iteration] = state.ris_excitation

    code = EXIT_OK
    try:
        run_to_convergence(cfg, on_state=keep, min_iterations=kept[-1] if kept else 0)
    except DivergenceError as exc:
        log.error("field-map: %s", exc)
        code = EXIT_DIVERGENCE
    params, ris = cfg.channel_params(), cfg.ris_array()
    grid = analysis.observation_grid(cfg, samples)
    for k in kept:
        if k not in snapshots:
            log.warning("field-map: run ended before checkpoint %d", k)
            continue
        fmap = analysis.field_map(params, ris, snapshots[k], grid)
        write_field_map(os.path.join(out, f"field_map_iter_{k:04d}.txt"), fmap, k)
    return code


def cmd_dmax(cfg, out, threshold=None) -> int:
    thr = cfg.dmax_threshold_w if threshold is None else threshold
    d = analysis.find_dmax(cfg, thr)
    _write_json(os.path.join(out, "dmax.json"), {"dmax_m": d, "threshold_w": thr,
                                                 "resolution_m": cfg.dmax_resolution_m})
    log.info("dmax: %.4f m", d)
    return EXIT_OK


def cmd_fov(cfg, out, jobs=1, distance=None, threshold=None) -> int:
    thr = cfg.fov_threshold_w if threshold is None else threshold
    result = analysis.sweep_angle(cfg, distance=distance, jobs=jobs)
    header, rows = sweep_rows(result)
    header[0] = "angle_deg"
    _write_csv(os.path.join(out, "sweep_angle.csv"), header, rows)
    fov = analysis.field_of_view(result, thr)
    d = cfg.distance_m if distance is None else distance
    _write_json(os.path.join(out, "fov.json"), {"fov_deg": fov, "threshold_w": thr, "distance_m": d})
    log.info("fov: %.3f deg", fov)
    return EXIT_OK


def cmd_calibrate_psat(cfg, out, target=None, distance=None) -> int:
    p_sat, achieved = analysis.calibrate_saturation_power(cfg, target, distance)
    target = cfg.calibration_target_w if target is None else target
    distance = cfg.calibration_distance_m if distance is None else distance
    _write_json(os.path.join(out, "calibration.json"), {
        "saturation_power_w": p_sat, "target_p_r_w": target, "achieved_p_r_w": achieved,
        "relative_error": (achieved - target) / target, "distance_m": distance,
        "ris": [cfg.ris_rows, cfg.ris_cols], "ue": [cfg.ue_rows, cfg.ue_cols],
    })
    with open(os.path.join(out, "calibrated.cfg"), "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg.replace(saturation_power_w=p_sat)))
    log.info("calibrate-psat: P_sat = %r W gives P_r = %.6g W", p_sat, achieved)
    return EXIT_OK


# ---- argument handling -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario file (defaults fill omitted keys)")
    common.add_argument("--out", metavar="PATH", default=".", help="output directory (created if missing)")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel sweep workers")
    common.add_argument("--seed", type=int, default=None, metavar="N", help="random initial phase seed")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--timing", action="store_true", help="record wall time in JSON output")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="retrolink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("converge", parents=[common], help="run one power cycle to steady state")
    p = sub.add_parser("sweep", parents=[common], help="sweep distance, angle or array size")
    p.add_argument("--axis", choices=tuple(_AXES), required=True)
    p.add_argument("--distance", type=float, help="fixed distance for angle sweeps (m)")
    p.add_argument("--dbm", action="store_true", help="append dBm columns")
    p = sub.add_parser("field-map", parents=[common], help="field maps at iteration checkpoints")
    p.add_argument("--checkpoints", type=lambda s: [int(x) for x in s.split(",")], metavar="K1,K2,...")
    p.add_argument("--samples", type=int, help="grid samples per axis")
    p = sub.add_parser("dmax", parents=[common], help="maximum transfer distance")
    p.add_argument("--threshold", type=float, help="received-power threshold (W)")
    p = sub.add_parser("fov", parents=[common], help="field of view from an angle sweep")
    p.add_argument("--distance", type=float)
    p.add_argument("--threshold", type=float, help="charging-power threshold (W)")
    p = sub.add_parser("calibrate-psat", parents=[common], help="calibrate amplifier saturation power")
    p.add_argument("--target", type=float, help="target steady-state received power (W)")
    p.add_argument("--distance", type=float)
    return parser


def _config_from_args(args) -> ScenarioConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides.update(parse_config_text(item, "--set"))
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, **overrides)


def _dispatch(args, cfg) -> int:
    out = args.out
    if args.command == "converge":
        return cmd_converge(cfg, out, args.timing)
    if args.command == "sweep":
        return cmd_sweep(cfg, out, args.axis, args.jobs, args.distance, args.dbm)
    if args.command == "field-map":
        return cmd_field_map(cfg, out, args.checkpoints, args.samples)
    if args.command == "dmax":
        return cmd_dmax(cfg, out, args.threshold)
    if args.command == "fov":
        return cmd_fov(cfg, out, args.jobs, args.distance, args.threshold)
    return cmd_calibrate_psat(cfg, out, args.target, args.distance)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    if args.jobs < 1:
        print("retrolink: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _config_from_args(args)
        os.makedirs(args.out, exist_ok=True)
        return _dispatch(args, cfg)
    except (ConfigError, OSError) as exc:
        print(f"retrolink: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"retrolink: calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except DivergenceError as exc:
        print(f"retrolink: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (BracketError, EmptyFovError, InconclusiveBeamwidthError) as exc:
        print(f"retrolink: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
