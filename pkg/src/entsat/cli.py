"""Scenario runner.

Each subcommand reads one YAML configuration file describing a study and
writes delimited-text result tables (and, for the Monte Carlo study, a
JSON-lines swap-event log) into the output directory. Units are spelled out
in configuration key names and column names. Identical configurations
produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .annual import (
    altitude_sweep,
    pair_from_catalog,
)
from .geometry import OverpassSpec, visibility_window
from .io import ResultTable, emit, emit_events
from .linkbudget import OpticsParams, pin_to_system_loss
from .mcsim import McConfig, aggregate_stats, run_trials
from .rates import (
    ProtocolParams,
    crossover_capacity,
    link_etas,
    nu_c,
    optimize_static_split,
    pdv,
    rate_sample,
)
from .geometry import link_sample

OUTPUT_DIR_ENV = "ENTSAT_OUTPUT_DIR"

# representative crossing geometries, offsets as fractions of the baseline
NAMED_PASSES = {
    "zenith-zenith": (0.0, 0.0),
    "symmetric": (0.0, 90.0),
    "zenith-a-90": (0.5, 90.0),
    "zenith-a-45": (0.5, 45.0),
}


class ConfigError(Exception):
    pass


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


def _grid(value, key: str) -> np.ndarray:
    """A list of numbers, or {start, stop, num} / {start, stop, step}."""
    if isinstance(value, (list, tuple)):
        return np.asarray(value, dtype=float)
    if isinstance(value, dict):
        try:
            if "num" in value:
                return np.linspace(value["start"], value["stop"], int(value["num"]))
            return np.arange(
                value["start"], value["stop"] + 0.5 * value["step"], value["step"]
            )
        except KeyError as exc:
            raise ConfigError(f"{key}: missing {exc} in grid spec") from exc
    raise ConfigError(f"{key}: expected list or start/stop grid spec")


def _resolve_optics(cfg: dict, pin_altitude_km: float) -> OpticsParams:
    section = dict(cfg.get("optics") or {})
    target_db = section.pop("system_loss_db", None)
    pin_alt = section.pop("reference_altitude_km", pin_altitude_km)
    field_names = set(OpticsParams.__dataclass_fields__)
    unknown = set(section) - field_names
    if unknown:
        raise ConfigError(f"optics: unknown keys {sorted(unknown)}")
    optics = OpticsParams(**section)
    if target_db is not None:
        optics = pin_to_system_loss(optics, pin_alt, float(target_db))
    return optics


def _resolve_protocol(cfg: dict) -> ProtocolParams:
    section = dict(cfg.get("protocol") or {})
    field_names = set(ProtocolParams.__dataclass_fields__)
    unknown = set(section) - field_names
    if unknown:
        raise ConfigError(f"protocol: unknown keys {sorted(unknown)}")
    return ProtocolParams(**section)


def _resolve_spec(cfg: dict) -> OverpassSpec:
    section = cfg.get("overpass")
    if not isinstance(section, dict):
        raise ConfigError("missing overpass section")
    section = dict(section)
    name = section.pop("pass", None)
    baseline = float(section.pop("baseline_km", 1000.0))
    altitude = float(section.pop("altitude_km", 500.0))
    min_elev = math.radians(float(section.pop("min_elevation_deg", 10.0)))
    if name is not None:
        if name not in NAMED_PASSES:
            raise ConfigError(
                f"overpass.pass: unknown name {name!r}; choose from "
                f"{sorted(NAMED_PASSES)}"
            )
        frac, phi_deg = NAMED_PASSES[name]
        delta, phi = frac * baseline, math.radians(phi_deg)
    else:
        try:
            delta = float(section.pop("delta_km"))
            phi = math.radians(float(section.pop("phi_deg")))
        except KeyError as exc:
            raise ConfigError(f"overpass: missing {exc}") from exc
    if section:
        raise ConfigError(f"overpass: unknown keys {sorted(section)}")
    return OverpassSpec(baseline, altitude, delta, phi, min_elev)


def _metadata(cfg: dict, args) -> dict:
    return {
        "config": cfg,
        "seed": getattr(args, "seed", None),
        "version": __version__,
    }


def _out_path(args, default_name: str) -> Path:
    out_dir = Path(args.output_dir or os.environ.get(OUTPUT_DIR_ENV, "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / default_name


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_overpass(cfg, args) -> list[Path]:
    spec = _resolve_spec(cfg)
    optics = _resolve_optics(cfg, spec.altitude_km)
    params = _resolve_protocol(cfg)
    n = int(cfg.get("samples", 513))
    window = visibility_window(spec)
    rows = []
    if window is not None:
        for t in np.linspace(window.t_start_s, window.t_end_s, n):
            s = link_sample(spec, float(t))
            eta_a, eta_b = link_etas(s, optics)
            r = rate_sample(s, optics, params)
            rows.append((
                float(t), s.elevation_a_rad, s.elevation_b_rad,
                s.slant_a_km, s.slant_b_km, eta_a, eta_b,
                r.dddl_rate, r.link_rate_a, r.link_rate_b, r.ssqr_rate,
            ))
    table = ResultTable(
        name="overpass-time-series",
        columns=("t_s", "elevation_a_rad", "elevation_b_rad",
                 "slant_a_km", "slant_b_km", "eta_a", "eta_b",
                 "dddl_rate_pairs_per_s", "link_rate_a_pairs_per_s",
                 "link_rate_b_pairs_per_s", "ssqr_rate_pairs_per_s"),
        rows=rows,
        metadata=_metadata(cfg, args),
    )
    summary = ResultTable(
        name="overpass-summary",
        columns=("protocol", "n_a", "n_b", "pdv_pairs"),
        rows=[
            ("dddl", 0, 0, pdv(spec, optics, params, "dddl").pdv_pairs),
            ("ssqr-equal", params.n_sat // 2, params.n_sat - params.n_sat // 2,
             pdv(spec, optics, replace(params, n_a=None, n_b=None),
                 "ssqr").pdv_pairs),
            ("ssqr-optimal", *_optimal_row(spec, optics, params)),
        ],
        metadata=_metadata(cfg, args),
    )
    paths = [_out_path(args, "overpass_time_series.csv"),
             _out_path(args, "overpass_summary.csv")]
    emit(table, paths[0])
    emit(summary, paths[1])
    return paths


def _optimal_row(spec, optics, params):
    n_a, n_b, result = optimize_static_split(spec, optics, params)
    return n_a, n_b, result.pdv_pairs


def _cmd_sweep_geometry(cfg, args) -> list[Path]:
    base = _resolve_spec(cfg)
    optics = _resolve_optics(cfg, base.altitude_km)
    params = _resolve_protocol(cfg)
    grid = cfg.get("grid") or {}
    deltas = _grid(grid.get("delta_km", [base.delta_km]), "grid.delta_km")
    phis = _grid(grid.get("phi_deg", [math.degrees(base.phi_rad)]), "grid.phi_deg")
    rows = []
    for delta in deltas:
        for phi_deg in phis:
            spec = replace(base, delta_km=float(delta),
                           phi_rad=math.radians(float(phi_deg)))
            p_d = pdv(spec, optics, params, "dddl").pdv_pairs
            p_eq = pdv(spec, optics, replace(params, n_a=None, n_b=None),
                       "ssqr").pdv_pairs
            n_a, n_b, p_opt = _optimal_row(spec, optics, params)
            rows.append((float(delta), float(phi_deg), p_d, p_eq, p_opt, n_a, n_b))
    table = ResultTable(
        name="geometry-sweep",
        columns=("delta_km", "phi_deg", "pdv_dddl_pairs",
                 "pdv_ssqr_equal_pairs", "pdv_ssqr_optimal_pairs",
                 "n_a_optimal", "n_b_optimal"),
        rows=rows,
        metadata=_metadata(cfg, args),
    )
    path = _out_path(args, "geometry_sweep.csv")
    emit(table, path)
    return [path]


def _cmd_sweep_loss(cfg, args) -> list[Path]:
    base = _resolve_spec(cfg)
    params = _resolve_protocol(cfg)
    losses = _grid(cfg.get("system_loss_db", {"start": 20, "stop": 40, "num": 21}),
                   "system_loss_db")
    n_sats = [int(n) for n in np.atleast_1d(
        np.asarray(cfg.get("n_sat", [params.n_sat])))]
    raw_optics = _resolve_optics({"optics": dict(cfg.get("optics") or {})},
                                 base.altitude_km)
    rows = []
    for loss_db in losses:
        optics = pin_to_system_loss(raw_optics, base.altitude_km, float(loss_db))
        p_d = pdv(base, optics, params, "dddl").pdv_pairs
        for n_sat in n_sats:
            p = replace(params, n_sat=n_sat, n_a=None, n_b=None)
            _, _, p_opt = _optimal_row(base, optics, p)
            rows.append((float(loss_db), n_sat, p_d, p_opt))
    table = ResultTable(
        name="system-loss-sweep",
        columns=("system_loss_db", "n_sat", "pdv_dddl_pairs",
                 "pdv_ssqr_optimal_pairs"),
        rows=rows,
        metadata=_metadata(cfg, args),
    )
    path = _out_path(args, "loss_sweep.csv")
    emit(table, path)
    return [path]


def _cmd_annual(cfg, args) -> list[Path]:
    pairs = cfg.get("pairs")
    if not pairs:
        raise ConfigError("annual: missing pairs list")
    altitudes = _grid(cfg.get("altitude_km", {"start": 200, "stop": 800,
                                              "step": 20}), "altitude_km")
    params = _resolve_protocol(cfg)
    optics = _resolve_optics(cfg, float(cfg.get("optics", {}).get(
        "reference_altitude_km", 500.0)))
    n_gamma = int(cfg.get("n_gamma", 360))
    catalog_path = cfg.get("station_catalog")
    protocols = cfg.get("protocols", ["dddl", "ssqr-equal", "ssqr-optimal"])
    rows = []
    for name_a, name_b in pairs:
        pair = pair_from_catalog(name_a, name_b, catalog_path)
        for label in protocols:
            proto, policy = {
                "dddl": ("dddl", "equal"),
                "ssqr-equal": ("ssqr", "equal"),
                "ssqr-optimal": ("ssqr", "optimal-static"),
            }[label]
            for res in altitude_sweep(pair, altitudes, optics, params, proto,
                                      policy, n_gamma=n_gamma):
                rows.append((pair.name, label, res.altitude_km,
                             res.mean_pass_pdv, res.annual_pdv,
                             res.orbits_per_year))
    table = ResultTable(
        name="annual-pdv",
        columns=("pair", "protocol", "altitude_km", "mean_pass_pdv_pairs",
                 "annual_pdv_pairs", "orbits_per_year"),
        rows=rows,
        metadata=_metadata(cfg, args),
    )
    path = _out_path(args, "annual_pdv.csv")
    emit(table, path)
    return [path]


def _cmd_crossover(cfg, args) -> list[Path]:
    base = _resolve_spec(cfg) if "overpass" in cfg else None
    params = _resolve_protocol(cfg)
    names = cfg.get("passes", list(NAMED_PASSES) if base is None else [])
    baseline = float(cfg.get("baseline_km", 1000.0))
    altitude = float(cfg.get("altitude_km", 500.0))
    specs = []
    if base is not None:
        specs.append(("custom", base))
    for name in names:
        frac, phi_deg = NAMED_PASSES[name]
        specs.append((name, OverpassSpec(baseline, altitude, frac * baseline,
                                         math.radians(phi_deg))))
    optics = _resolve_optics(cfg, altitude)
    rows = []
    for name, spec in specs:
        n_c = crossover_capacity(spec, optics, params)
        rows.append((name, -1 if n_c is None else n_c,
                     nu_c(spec, optics, params)))
    table = ResultTable(
        name="crossover-capacity",
        columns=("pass", "n_c_slots", "nu_c_slots_per_mhz"),
        rows=rows,
        metadata=_metadata(cfg, args),
    )
    path = _out_path(args, "crossover.csv")
    emit(table, path)
    return [path]


def _cmd_montecarlo(cfg, args) -> list[Path]:
    spec = _resolve_spec(cfg)
    optics = _resolve_optics(cfg, spec.altitude_km)
    params = _resolve_protocol(cfg)
    section = dict(cfg.get("mc") or {})
    taus = section.pop("tau_mem_sweep_s", None)
    if args.seed is not None:
        section["seed"] = args.seed
    tau_default = section.get("tau_mem_s", math.inf)
    section["tau_mem_s"] = (
        math.inf if tau_default in ("inf", None) else float(tau_default))
    mc = McConfig(**section)
    records = run_trials(spec, optics, params, mc)
    stats = aggregate_stats(records, bin_width_s=float(cfg.get(
        "bin_width_s", 10.0)))
    paths = []

    events_path = _out_path(args, "mc_events.jsonl")
    emit_events(records, events_path)
    paths.append(events_path)

    wait_rows = [
        (float(c),
         stats.wait_a_median[i], stats.wait_a_q1[i], stats.wait_a_q3[i],
         stats.wait_b_median[i], stats.wait_b_q1[i], stats.wait_b_q3[i],
         stats.fidelity_median[i], stats.fidelity_q1[i], stats.fidelity_q3[i])
        for i, c in enumerate(stats.bin_centers)
    ]
    wait_table = ResultTable(
        name="mc-binned-statistics",
        columns=("t_bin_center_s", "wait_a_median_s", "wait_a_q1_s",
                 "wait_a_q3_s", "wait_b_median_s", "wait_b_q1_s",
                 "wait_b_q3_s", "fidelity_median", "fidelity_q1",
                 "fidelity_q3"),
        rows=wait_rows,
        metadata=_metadata(cfg, args),
    )
    stats_path = _out_path(args, "mc_binned_stats.csv")
    emit(wait_table, stats_path)
    paths.append(stats_path)

    summary_rows = [(math.inf if math.isinf(mc.tau_mem_s) else mc.tau_mem_s,
                     stats.pdv_mean, stats.pdv_std, stats.median_fidelity)]
    if taus:
        for tau in taus:
            tau_f = math.inf if tau in ("inf", None) else float(tau)
            st = aggregate_stats(records, tau_mem_s=tau_f)
            summary_rows.append((tau_f, st.pdv_mean, st.pdv_std,
                                 st.median_fidelity))
    summary = ResultTable(
        name="mc-summary",
        columns=("tau_mem_s", "pdv_mean_pairs", "pdv_std_pairs",
                 "median_fidelity"),
        rows=summary_rows,
        metadata=_metadata(cfg, args),
    )
    summary_path = _out_path(args, "mc_summary.csv")
    emit(summary, summary_path)
    paths.append(summary_path)
    return paths


_COMMANDS = {
    "overpass": _cmd_overpass,
    "sweep-geometry": _cmd_sweep_geometry,
    "sweep-loss": _cmd_sweep_loss,
    "annual": _cmd_annual,
    "crossover": _cmd_crossover,
    "montecarlo": _cmd_montecarlo,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entsat",
        description="Satellite entanglement-distribution studies",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run a {name} study from a config file")
        p.add_argument("config", help="YAML configuration file")
        p.add_argument("--output-dir", default=None,
                       help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured random seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallelism budget; results are independent of it")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        paths = _COMMANDS[args.command](cfg, args)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
