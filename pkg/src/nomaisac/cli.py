"""Config-driven experiment runner.

A YAML document describes one experiment (uplink frontier, ergodic uplink
frontier or downlink constraint sweep) and the designs to compare.  The
runner merges the per-design curves into a single :class:`RegionResult`
and writes ``region.csv`` and/or ``region.json``.

Example::

    experiment_kind: uplink_region
    designs: [oma, pure_noma, semi_noma]
    gamma_c: 3
    gamma_s: 1
    seed: 42
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .channel import ArrayGeometry, CorrelationSpec, LinkBudget, draw_rayleigh_channels
from .downlink import DownlinkDesign, SensingMetricSpec, region_sweep_downlink
from .errors import ConfigError, ParseError, UnknownKey, ValidationError
from .numerics import RNG_ID, OptimizerSettings, RngSeed
from .results import RegionResult, RegionRow
from .uplink import (
    ResourceSplit,
    UplinkDesign,
    check_split,
    ergodic_frontier,
    frontier,
    uplink_point,
)

__all__ = ["ExperimentConfig", "load_config", "config_from_dict", "run_experiment", "emit",
           "main"]

KINDS = ("uplink_region", "uplink_ergodic_region", "downlink_region")
FORMATS = ("csv", "json")
CSV_FIELDS = ("design", "sweep_param", "sensing_value", "comm_value", "pareto", "status")

# substreams derived from the experiment seed
CHANNEL_STREAM = 1
OPTIMIZER_STREAM = 2
FADING_STREAM = 3

_UPLINK_DESIGNS = tuple(d.value for d in UplinkDesign)
_DOWNLINK_DESIGNS = tuple(d.value for d in DownlinkDesign)
_SPLIT_KEYS = ("alpha_s", "alpha_c", "alpha_m")
_OPTIMIZER_KEYS = tuple(f.name for f in dataclasses.fields(OptimizerSettings))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description with every default filled in.

    Uplink runs read the link budget (``gamma_c`` doubles as the mean SNR
    of the ergodic experiment).  Downlink runs read the array, channel and
    sweep fields; the sweep is ``tau_levels`` if given, otherwise
    ``num_levels`` evenly spaced values on ``[tau_min, tau_max]``.
    """

    experiment_kind: str
    designs: tuple
    seed: int
    trials: int = 10_000
    num_points: int = 101
    # uplink
    gamma_c: float = 1.0
    gamma_s: float = 1.0
    kappa: float = 1.0
    rho_resid: float = 1.0
    split: Optional[tuple] = None
    # downlink
    num_antennas: int = 4
    element_spacing: float = 0.5
    num_users: int = 2
    rho: float = 0.0
    sigma2: float = 1.0
    power: float = 10.0
    channel_draw: int = 0
    metric: str = "gain_at_target"
    target_angle_deg: float = 0.0
    mainlobe_halfwidth_deg: float = 5.0
    angle_grid_points: int = 181
    tau_min: float = 0.0
    tau_max: Optional[float] = None
    num_levels: int = 8
    tau_levels: Optional[tuple] = None
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)

    @property
    def budget(self) -> LinkBudget:
        return LinkBudget(gamma_s=self.gamma_s, gamma_c=self.gamma_c, kappa=self.kappa,
                          rho_resid=self.rho_resid)

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.num_antennas, self.element_spacing)

    @property
    def sensing_spec(self) -> SensingMetricSpec:
        return SensingMetricSpec(
            kind=self.metric,
            target_angle=math.radians(self.target_angle_deg),
            mainlobe_halfwidth=math.radians(self.mainlobe_halfwidth_deg),
            num_angles=self.angle_grid_points,
        )

    def sweep_levels(self) -> list:
        if self.tau_levels is not None:
            return list(self.tau_levels)
        top = self.tau_max if self.tau_max is not None else self.power * self.num_antennas
        return [float(t) for t in np.linspace(self.tau_min, top, self.num_levels)]

    def echo(self) -> dict:
        """Plain-data view of the effective config, as stored in metadata."""
        out = dataclasses.asdict(self)
        out["designs"] = list(self.designs)
        out["split"] = dict(zip(_SPLIT_KEYS, self.split)) if self.split else None
        out["tau_levels"] = list(self.tau_levels) if self.tau_levels is not None else None
        return out


# --------------------------------------------------------------------------
# parsing and validation

class _StrictLoader(yaml.SafeLoader):
    """Safe loader that rejects duplicate mapping keys."""


def _construct_mapping(loader, node, deep=False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            mark = key_node.start_mark
            raise ParseError(f"duplicate key {key!r}", mark.line + 1, mark.column + 1)
        seen.add(key)
    return yaml.SafeLoader.construct_mapping(loader, node, deep)


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _parse_text(text: str) -> dict:
    try:
        doc = yaml.load(text, Loader=_StrictLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line, col = (mark.line + 1, mark.column + 1) if mark else (None, None)
        raise ParseError(str(exc.problem or exc), line, col) from exc
    except yaml.YAMLError as exc:
        raise ParseError(str(exc)) from exc
    if not isinstance(doc, dict):
        raise ParseError("top level of the config must be a mapping")
    return doc


def _as_int(name, value, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(name, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ValidationError(name, f"must be at least {lo}, got {value}")
    if hi is not None and value > hi:
        raise ValidationError(name, f"must be at most {hi}, got {value}")
    return value


def _as_float(name, value, lo=None, hi=None, strict_lo=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(name, "must be finite")
    if lo is not None and (value < lo or (strict_lo and value == lo)):
        raise ValidationError(name, f"must be {'>' if strict_lo else '>='} {lo}, got {value}")
    if hi is not None and value > hi:
        raise ValidationError(name, f"must be <= {hi}, got {value}")
    return value


_FIELDS = {
    "trials": lambda v: _as_int("trials", v, lo=2),
    "num_points": lambda v: _as_int("num_points", v, lo=2),
    "gamma_c": lambda v: _as_float("gamma_c", v, lo=0.0),
    "gamma_s": lambda v: _as_float("gamma_s", v, lo=0.0),
    "kappa": lambda v: _as_float("kappa", v, lo=0.0, strict_lo=True),
    "rho_resid": lambda v: _as_float("rho_resid", v, lo=0.0, hi=1.0),
    "num_antennas": lambda v: _as_int("num_antennas", v, lo=1),
    "element_spacing": lambda v: _as_float("element_spacing", v, lo=0.0, strict_lo=True),
    "num_users": lambda v: _as_int("num_users", v, lo=1),
    "rho": lambda v: _as_float("rho", v, lo=0.0, hi=1.0),
    "sigma2": lambda v: _as_float("sigma2", v, lo=0.0, strict_lo=True),
    "power": lambda v: _as_float("power", v, lo=0.0, strict_lo=True),
    "channel_draw": lambda v: _as_int("channel_draw", v, lo=0),
    "target_angle_deg": lambda v: _as_float("target_angle_deg", v, lo=-90.0, hi=90.0),
    "mainlobe_halfwidth_deg": lambda v: _as_float("mainlobe_halfwidth_deg", v, lo=0.0,
                                                  hi=90.0),
    "angle_grid_points": lambda v: _as_int("angle_grid_points", v, lo=2),
    "tau_min": lambda v: _as_float("tau_min", v),
    "tau_max": lambda v: _as_float("tau_max", v),
    "num_levels": lambda v: _as_int("num_levels", v, lo=1),
}

ALLOWED_KEYS = frozenset(
    {"experiment_kind", "designs", "seed", "metric", "tau_levels", "split", "optimizer"}
    | set(_FIELDS)
)


def _parse_split(value):
    if not isinstance(value, dict):
        raise ValidationError("split", "expected a mapping with alpha_s, alpha_c, alpha_m")
    for key in value:
        if key not in _SPLIT_KEYS:
            raise UnknownKey(f"split.{key}", [f"split.{k}" for k in _SPLIT_KEYS])
    parts = tuple(_as_float(f"split.{k}", value.get(k, 0.0), lo=0.0) for k in _SPLIT_KEYS)
    try:
        ResourceSplit(*parts)
    except ValueError as exc:
        raise ValidationError("split", str(exc)) from exc
    return parts


def _parse_optimizer(value):
    if not isinstance(value, dict):
        raise ValidationError("optimizer", "expected a mapping")
    kwargs = {}
    for key, v in value.items():
        if key not in _OPTIMIZER_KEYS:
            raise UnknownKey(f"optimizer.{key}", [f"optimizer.{k}" for k in _OPTIMIZER_KEYS])
        if key in ("max_iters", "restarts"):
            kwargs[key] = _as_int(f"optimizer.{key}", v, lo=1)
        else:
            kwargs[key] = _as_float(f"optimizer.{key}", v)
    try:
        return OptimizerSettings(**kwargs)
    except ValueError as exc:
        raise ValidationError("optimizer", str(exc)) from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Validate a parsed config tree and apply defaults."""
    for key in doc:
        if key not in ALLOWED_KEYS:
            raise UnknownKey(key, ALLOWED_KEYS)
    for key in ("experiment_kind", "designs", "seed"):
        if key not in doc:
            raise ValidationError(key, "missing required field")

    kind = doc["experiment_kind"]
    if kind not in KINDS:
        raise ValidationError("experiment_kind", f"must be one of {', '.join(KINDS)}")
    valid = _DOWNLINK_DESIGNS if kind == "downlink_region" else _UPLINK_DESIGNS
    designs = doc["designs"]
    if isinstance(designs, str):
        designs = [designs]
    if not isinstance(designs, list) or not designs:
        raise ValidationError("designs", "expected a non-empty list")
    for d in designs:
        if d not in valid:
            raise ValidationError("designs", f"{d!r} is not valid for {kind}; "
                                             f"choose from {', '.join(valid)}")
    if len(set(designs)) != len(designs):
        raise ValidationError("designs", "duplicate design")

    kwargs = {
        "experiment_kind": kind,
        "designs": tuple(designs),
        "seed": _as_int("seed", doc["seed"], lo=0, hi=2**64 - 1),
    }
    for key, check in _FIELDS.items():
        if key in doc:
            kwargs[key] = check(doc[key])

    if "metric" in doc:
        if doc["metric"] not in ("gain_at_target", "beampattern_mse"):
            raise ValidationError("metric", "must be gain_at_target or beampattern_mse")
        kwargs["metric"] = doc["metric"]
    if "tau_levels" in doc:
        levels = doc["tau_levels"]
        if not isinstance(levels, list) or not levels:
            raise ValidationError("tau_levels", "expected a non-empty list of numbers")
        levels = tuple(_as_float("tau_levels", t) for t in levels)
        if any(b < a for a, b in zip(levels, levels[1:])):
            raise ValidationError("tau_levels", "levels must be ascending")
        kwargs["tau_levels"] = levels
    if "split" in doc and doc["split"] is not None:
        if kind != "uplink_region":
            raise ValidationError("split", "a fixed split only applies to uplink_region")
        split = ResourceSplit(*_parse_split(doc["split"]))
        for d in designs:
            try:
                check_split(d, split)
            except ValueError as exc:
                raise ValidationError("split", str(exc)) from exc
        kwargs["split"] = split.as_tuple()
    if "optimizer" in doc:
        kwargs["optimizer"] = _parse_optimizer(doc["optimizer"])

    cfg = ExperimentConfig(**kwargs)
    if kind == "uplink_ergodic_region" and cfg.trials < 100:
        raise ValidationError("trials", "ergodic experiments need at least 100 trials")
    if kind == "uplink_ergodic_region" and not cfg.gamma_c > 0:
        raise ValidationError("gamma_c", "mean SNR must be positive")
    if cfg.tau_max is not None and cfg.tau_max < cfg.tau_min:
        raise ValidationError("tau_max", "must not be below tau_min")
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read and validate a YAML experiment config."""
    text = Path(path).read_text(encoding="utf-8")
    return config_from_dict(_parse_text(text))


# --------------------------------------------------------------------------
# running

def _uplink_fixed(design, cfg):
    split = ResourceSplit(*cfg.split)
    pt = uplink_point(design, split, cfg.budget)
    row = RegionRow(design=design, sweep_param=split.alpha_s + split.alpha_m,
                    sensing_value=pt.sensing_rate, comm_value=pt.comm_rate,
                    aux=dict(zip(_SPLIT_KEYS, split.as_tuple())))
    return RegionResult(rows=[row], points=[pt]).mark_pareto()


def _run_design(design, cfg: ExperimentConfig) -> RegionResult:
    seed = RngSeed(cfg.seed)
    if cfg.experiment_kind == "uplink_region":
        if cfg.split is not None:
            return _uplink_fixed(design, cfg)
        return frontier(design, cfg.budget, cfg.num_points)
    if cfg.experiment_kind == "uplink_ergodic_region":
        return ergodic_frontier(design, cfg.gamma_c, cfg.budget, cfg.trials,
                                seed.child(FADING_STREAM), cfg.num_points)
    channels = draw_rayleigh_channels(cfg.geometry, cfg.num_users, CorrelationSpec(cfg.rho),
                                      seed.child(CHANNEL_STREAM), trial=cfg.channel_draw,
                                      noise_power=cfg.sigma2)
    return region_sweep_downlink(design, channels, cfg.geometry, cfg.sensing_spec, cfg.power,
                                 cfg.sweep_levels(), cfg.optimizer,
                                 seed.child(OPTIMIZER_STREAM))


def run_experiment(config: ExperimentConfig) -> RegionResult:
    """Run every design of ``config`` and merge the rows, sorted."""
    start = time.perf_counter()
    merged = RegionResult(rows=[], points=[])
    for design in config.designs:
        merged.extend(_run_design(design, config))
    merged.sort()
    merged.metadata = {
        "config": config.echo(),
        "version": __version__,
        "rng": RNG_ID,
        "wall_time_s": time.perf_counter() - start,
    }
    return merged


# --------------------------------------------------------------------------
# output

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float, np.floating, np.integer)):
        return f"{float(value):.9g}"
    return str(value)


def _write_csv(result: RegionResult, path: Path):
    aux_names = sorted({k for r in result.rows for k in r.aux})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(CSV_FIELDS) + aux_names)
        for r in result.rows:
            writer.writerow([r.design] + [_fmt(getattr(r, k)) for k in CSV_FIELDS[1:]]
                            + [_fmt(r.aux.get(k)) for k in aux_names])


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def emit(result: RegionResult, out_dir, formats=FORMATS) -> list:
    """Write ``region.csv`` and/or ``region.json`` into ``out_dir``.

    Returns the written paths.  CSV reals use 9 significant digits; the
    JSON document keeps full precision and the metadata block.
    """
    formats = list(formats)
    for f in formats:
        if f not in FORMATS:
            raise ValueError(f"unknown output format {f!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out / "region.csv"
        _write_csv(result, path)
        written.append(path)
    if "json" in formats:
        path = out / "region.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, indent=2, default=_json_default, allow_nan=True)
            fh.write("\n")
        written.append(path)
    return written


# --------------------------------------------------------------------------
# command line

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which is reserved for failed rows
    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    p = _Parser(prog="nomaisac", description="Run a NOMA-ISAC tradeoff-region experiment.")
    p.add_argument("--config", required=True, help="YAML experiment description")
    p.add_argument("--out", default=".", help="output directory (default: cwd)")
    p.add_argument("--formats", default="csv,json", help="comma list of csv, json")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--trials", type=int, help="override the config trial count")
    return p


def main(argv=None) -> int:
    """Entry point; returns 0 if every row is ok, 2 if some failed, 1 on errors."""
    try:
        args = _build_parser().parse_args(argv)
        formats = [f.strip() for f in args.formats.split(",") if f.strip()]
        if not formats or any(f not in FORMATS for f in formats):
            raise ValidationError("--formats", "expected a comma list drawn from csv, json")
        doc = _parse_text(Path(args.config).read_text(encoding="utf-8"))
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.trials is not None:
            doc["trials"] = args.trials
        cfg = config_from_dict(doc)
        result = run_experiment(cfg)
        emit(result, args.out, formats)
    except (ConfigError, OSError) as exc:
        print(f"nomaisac: error: {exc}", file=sys.stderr)
        return 1
    return 2 if result.failed else 0


if __name__ == "__main__":
    sys.exit(main())
