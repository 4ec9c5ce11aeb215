"""Experiment configuration files.

Configs are INI files read with :mod:`configparser`.  Every option has a
canonical form, so ``dump_config(load_config(path))`` is stable under
repeated load/dump.  Times are milliseconds; rewards are abstract units.
"""

from __future__ import annotations

import configparser
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .latency import (
    DeterministicCluster,
    DeterministicLine,
    ExplicitMatrix,
    LatencyModel,
    load_ping_table,
    normalize_weights,
    world_model_from_table,
)
from .protocol import ProtocolParams
from .rewards import RewardParams, is_time_decreasing
from .simulator import BinaryDecay, SimConfig, Uniform
from .strategies import CoalitionKind, StrategyProfile

__all__ = ["SCHEMA_VERSION", "ConfigError", "ExperimentConfig", "load_config", "loads_config", "dump_config", "build"]

SCHEMA_VERSION = 1
MODES = ("simulate", "oracle", "compare")

# canonical option order and defaults per section; None means required
_SCHEMA: dict[str, dict[str, object]] = {
    "experiment": {"schema_version": SCHEMA_VERSION, "name": None, "mode": "simulate", "out": "", "tolerance": 0.01},
    "protocol": {"n": "", "c": "", "m": "", "tau": None},
    "rewards": {"mu": None, "mu0": 0.0, "kappa": "", "b": "", "b0": "", "static": False, "target": ""},
    "latency": {
        "model": None,
        "spacing": 1.0,
        "size_x": "",
        "size_y": "",
        "eps": "",
        "inter": "",
        "table": "",
        "normalize": "",
        "intra_mean": 1.0,
        "intra_std": 0.5,
        "inter_std": 0.8,
        "path": "",
        "value": "",
        "distribution": "fixed",
        "sigma": 0.5,
    },
    "strategy": {"profile": "honest", "members": "", "leaders_late": False, "grief": False, "deviator": "", "delay": ""},
    "simulation": {"rounds": 100_000, "replications": 4, "seed": 0, "burn_in": 0.01, "election": "uniform", "rho": "", "threshold": ""},
    "oracle": {"tables": "", "points": 100},
}

_MODELS = ("line", "cluster", "world", "matrix")
_PROFILES = ("honest", "late", "fixed", "coalition", "whale")
_TABLES = ("line", "cluster")


class ConfigError(ValueError):
    """Invalid or unparseable configuration."""


@dataclass
class ExperimentConfig:
    name: str
    mode: str
    sim: SimConfig
    out: str
    tolerance: float
    tables: tuple[str, ...]
    table_points: int
    normalized_nodes: Optional[int]
    values: dict = field(repr=False)  # canonical option values, used by dump_config
    source: Optional[Path] = None


# -- value parsing ------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _as_int(sec, key, raw) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected an integer, got {raw!r}") from None


def _as_float(sec, key, raw) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected a number, got {raw!r}") from None


def _as_bool(sec, key, raw) -> bool:
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{sec}] {key}: expected true/false, got {raw!r}")


def _as_ints(sec, key, raw) -> list[int]:
    return [_as_int(sec, key, x) for x in str(raw).replace(",", " ").split()]


def _canonical(sec: str, key: str, raw: str):
    """Parse ``raw`` into the canonical Python value for the option."""
    default = _SCHEMA[sec][key]
    raw = raw.strip()
    if raw == "":
        if default is None:
            raise ConfigError(f"[{sec}] {key} is required")
        return default
    if key in ("members", "tables"):
        return _as_ints(sec, key, raw) if key == "members" else [t.strip() for t in raw.replace(",", " ").split()]
    if isinstance(default, bool):
        return _as_bool(sec, key, raw)
    if isinstance(default, int) or key in ("n", "c", "m", "size_x", "size_y", "normalize", "deviator"):
        return _as_int(sec, key, raw)
    if isinstance(default, float) or key in ("tau", "mu", "kappa", "b", "b0", "target", "eps", "inter", "delay", "rho", "threshold", "value"):
        return _as_float(sec, key, raw)
    return raw


def _read(text: str, source: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError(f"{source}, line {e.lineno}: expected a [section] header before {e.line.strip()!r}") from None
    except configparser.ParsingError as e:
        lineno, line = e.errors[0]
        raise ConfigError(f"{source}, line {lineno}: cannot parse {line.strip()!r}") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigError(f"{source}, line {e.lineno}: {e.message if hasattr(e, 'message') else e}") from None
    values = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown option {key!r} in [{sec}]")
    for sec, opts in _SCHEMA.items():
        values[sec] = {}
        for key in opts:
            raw = cp.get(sec, key, fallback="") if cp.has_section(sec) else ""
            values[sec][key] = _canonical(sec, key, raw)
    return values


# -- object construction ------------------------------------------------------


def _need(v: dict, sec: str, key: str):
    x = v[sec][key]
    if x == "":
        raise ConfigError(f"[{sec}] {key} is required for this configuration")
    return x


def _latency(v: dict, base_dir: Path, normalize_override: Optional[int]) -> tuple[LatencyModel, Optional[int]]:
    lat = v["latency"]
    kind = lat["model"]
    if kind not in _MODELS:
        raise ConfigError(f"[latency] model must be one of {', '.join(_MODELS)}, got {kind!r}")
    if kind == "line":
        return DeterministicLine(_need(v, "protocol", "n"), lat["spacing"]), None
    if kind == "cluster":
        return DeterministicCluster(_need(v, "latency", "size_x"), _need(v, "latency", "size_y"), _need(v, "latency", "eps"), _need(v, "latency", "inter")), None
    if kind == "world":
        table_path = lat["table"]
        path = None if table_path in ("", "bundled") else (base_dir / table_path)
        if path is not None and not path.exists():
            raise ConfigError(f"[latency] table file not found: {path}")
        table = load_ping_table(path)
        total = normalize_override if normalize_override is not None else (lat["normalize"] or None)
        counts = normalize_weights(table.weights, total) if total else table.weights
        model = world_model_from_table(table.ping, counts, (lat["intra_mean"], lat["intra_std"]), lat["inter_std"], table.cities)
        return model, total
    if lat["path"] == "":
        # same location for every pair
        n = _need(v, "protocol", "n")
        return ExplicitMatrix(np.full((n, n), _need(v, "latency", "value")), lat["distribution"], lat["sigma"]), None
    path = base_dir / lat["path"]
    if not path.exists():
        raise ConfigError(f"[latency] matrix file not found: {path}")
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as e:
        raise ConfigError(f"[latency] cannot read matrix {path}: {e}") from None
    return ExplicitMatrix(values, lat["distribution"], lat["sigma"]), None


def _profile(v: dict, n: int) -> StrategyProfile:
    st = v["strategy"]
    kind = st["profile"]
    if kind not in _PROFILES:
        raise ConfigError(f"[strategy] profile must be one of {', '.join(_PROFILES)}, got {kind!r}")
    if kind == "honest":
        return StrategyProfile.honest(n)
    if kind == "late":
        return StrategyProfile.late(n)
    if kind == "fixed":
        return StrategyProfile.honest(n).with_fixed_delay(_need(v, "strategy", "deviator"), _need(v, "strategy", "delay"))
    members = st["members"]
    if not members:
        raise ConfigError("[strategy] members is required for coalition and whale profiles")
    if kind == "whale":
        return StrategyProfile.whale(n, members)
    return StrategyProfile.with_coalition(n, members, CoalitionKind.RATIONAL, st["leaders_late"], st["grief"])


def build(values: dict, base_dir: Path = Path("."), normalize_override: Optional[int] = None, source: Optional[Path] = None) -> ExperimentConfig:
    """Validate canonical option values and build the experiment objects."""
    exp = values["experiment"]
    if exp["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"[experiment] schema_version {exp['schema_version']} is not supported (expected {SCHEMA_VERSION})")
    if exp["mode"] not in MODES:
        raise ConfigError(f"[experiment] mode must be one of {', '.join(MODES)}, got {exp['mode']!r}")
    try:
        model, normalized = _latency(values, base_dir, normalize_override)
        pv = values["protocol"]
        n = model.n
        if pv["n"] != "" and pv["n"] != n:
            raise ConfigError(f"[protocol] n={pv['n']} but the latency model has {n} validators")
        default_q = -(-2 * n // 3)
        proto = ProtocolParams(n, pv["c"] if pv["c"] != "" else default_q, pv["m"] if pv["m"] != "" else default_q, pv["tau"])
        rewards = _rewards(values, proto.tau)
        sv = values["simulation"]
        if sv["election"] == "uniform":
            election = Uniform()
        elif sv["election"] == "decay":
            election = BinaryDecay(_need(values, "simulation", "rho"), _need(values, "simulation", "threshold"))
        else:
            raise ConfigError(f"[simulation] election must be uniform or decay, got {sv['election']!r}")
        sim = SimConfig(
            protocol=proto,
            rewards=rewards,
            latency=model,
            profile=_profile(values, n),
            rounds=sv["rounds"],
            replications=sv["replications"],
            seed=sv["seed"],
            election=election,
            burn_in=sv["burn_in"],
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"invalid configuration: {e}") from None
    tables = tuple(values["oracle"]["tables"] or ())
    bad = [t for t in tables if t not in _TABLES]
    if bad:
        raise ConfigError(f"[oracle] unknown tables {bad}; choose from {', '.join(_TABLES)}")
    if not exp["tolerance"] > 0:
        raise ConfigError("[experiment] tolerance must be positive")
    return ExperimentConfig(
        name=exp["name"],
        mode=exp["mode"],
        sim=sim,
        out=exp["out"],
        tolerance=exp["tolerance"],
        tables=tables,
        table_points=values["oracle"]["points"],
        normalized_nodes=normalized,
        values=values,
        source=source,
    )


def _rewards(v: dict, tau: float) -> RewardParams:
    r = v["rewards"]
    mu = r["mu"]
    if r["kappa"] != "" and r["b"] != "":
        raise ConfigError("[rewards] give either kappa or b, not both")
    if r["kappa"] != "":
        b = r["kappa"] * mu
    elif r["b"] != "":
        b = r["b"]
    else:
        raise ConfigError("[rewards] one of kappa or b is required")
    b0 = r["b0"] if r["b0"] != "" else b * tau
    if not r["static"] and not math.isclose(b0, b * tau, rel_tol=1e-9):
        raise ConfigError(f"[rewards] b0 != b * tau ({b0} vs {b * tau}); the block reward must reach 0 at the timeout")
    params = RewardParams(mu=mu, mu0=r["mu0"], b=b, b0=b0, tau=tau, static=r["static"], target=r["target"] if r["target"] != "" else None)
    if not params.static and not is_time_decreasing(params, tau):
        warnings.warn("rewards are not time-decreasing (b0 > mu * tau fails); early proposal is no longer dominant", stacklevel=3)
    return params


# -- public API ---------------------------------------------------------------


def loads_config(text: str, source: str = "<string>", base_dir: Path = Path("."), normalize_override: Optional[int] = None) -> ExperimentConfig:
    return build(_read(text, source), base_dir, normalize_override)


def load_config(path, normalize_override: Optional[int] = None) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    cfg = build(_read(text, str(path)), path.parent, normalize_override, path)
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize the canonical option values; empty options are omitted."""
    buf = io.StringIO()
    for sec, opts in _SCHEMA.items():
        lines = []
        for key in opts:
            val = cfg.values[sec][key]
            if val == "" or val == [] or val is None:
                continue
            lines.append(f"{key} = {_fmt(val)}")
        if lines:
            buf.write(f"[{sec}]\n" + "\n".join(lines) + "\n\n")
    return buf.getvalue().rstrip("\n") + "\n"
