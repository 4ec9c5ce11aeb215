"""``timing-sim`` command line: simulate, evaluate closed forms, or compare both.

Exit codes: 0 success, 1 usage or config error, 2 tolerance breach, 3 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import logging
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import oracle
from .config import ConfigError, ExperimentConfig, build, load_config
from .simulator import BinaryDecay, empirical_weight_distribution, run_experiment

log = logging.getLogger("timing_sim")

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE, EXIT_IO = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="timing-sim", description="Timing-game simulator and closed-form oracle.")
    p.add_argument("command", choices=["simulate", "oracle", "compare"])
    p.add_argument("--config", required=True, type=Path, help="experiment .cfg file")
    p.add_argument("--seed", type=int, help="override the simulation seed")
    p.add_argument("--rounds", type=int, help="override rounds per replication")
    p.add_argument("--out", type=Path, help="output directory (default: [experiment] out)")
    p.add_argument("--normalize-weights", type=int, metavar="N", help="scale world city weights to N validators")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


# -- output -------------------------------------------------------------------


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _summary_text(items: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())


def write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Write every file atomically; nothing is left behind on failure."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            staged.append(tmp)
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
        for (name, _), tmp in zip(files.items(), staged):
            os.replace(tmp, out_dir / name)
    except OSError:
        for tmp in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise


# -- commands -----------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def _simulate(cfg: ExperimentConfig) -> tuple[dict[str, str], dict, bool]:
    report = run_experiment(cfg.sim)
    files = {"utilities.csv": _csv_text(report.csv_rows())}
    summary = {"name": cfg.name, "command": "simulate", "seed": cfg.sim.seed, **report.summary()}
    if isinstance(cfg.sim.election, BinaryDecay):
        freq = empirical_weight_distribution(cfg.sim)
        rows = [["validator", "elections", "exceed_rate", "low_weight_fraction", "low_weight_se"]]
        for k in range(cfg.sim.n):
            rows.append([k, int(freq.elections[k]), _fmt(freq.exceed_rate[k]), _fmt(freq.low[k]), _fmt(freq.low_se[k])])
        files["weights.csv"] = _csv_text(rows)
    return files, summary, True


def _exact_utilities(cfg: ExperimentConfig) -> Optional[list]:
    model = cfg.sim.latency
    if not model.deterministic:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return oracle.profile_utility_exact(cfg.sim.protocol, cfg.sim.rewards, model.matrix(), cfg.sim.profile)


def _tables(cfg: ExperimentConfig) -> dict[str, str]:
    files = {}
    if "line" in cfg.tables:
        rows = oracle.fairness_line_table(oracle.line_figure_grid(cfg.table_points))
        files["fairness_line_early.csv"] = _csv_text([["n", "advantage"]] + [[n, _fmt(e)] for n, e, _ in rows])
        files["fairness_line_late.csv"] = _csv_text([["n", "advantage"]] + [[n, _fmt(l)] for n, _, l in rows])
    if "cluster" in cfg.tables:
        rows = oracle.fairness_cluster_table(oracle.cluster_figure_grid(cfg.table_points))
        files["fairness_cluster_early.csv"] = _csv_text([["l", "advantage"]] + [[_fmt(x), _fmt(e)] for x, e, _ in rows])
        files["fairness_cluster_late.csv"] = _csv_text([["l", "advantage"]] + [[_fmt(x), _fmt(l)] for x, _, l in rows])
    return files


def _oracle(cfg: ExperimentConfig) -> tuple[dict[str, str], dict, bool]:
    files = _tables(cfg)
    summary = {"name": cfg.name, "command": "oracle"}
    exact = _exact_utilities(cfg)
    if exact is not None:
        tags = cfg.sim.latency.tags()
        rows = [["validator", "tag", "utility"]] + [[k, tags[k], _fmt(u)] for k, u in enumerate(exact)]
        files["oracle_utilities.csv"] = _csv_text(rows)
        finite = [float(u) for u in exact]
        summary["advantage"] = _fmt(max(finite) / min(finite) - 1) if min(finite) > 0 and math.isfinite(max(finite)) else "inf"
    if isinstance(cfg.sim.election, BinaryDecay):
        summary["note"] = "stationary weights depend on the simulated exceed rate; use compare"
    if not files:
        raise ConfigError("oracle mode needs a deterministic latency model or [oracle] tables")
    return files, summary, True


def _compare(cfg: ExperimentConfig) -> tuple[dict[str, str], dict, bool]:
    summary = {"name": cfg.name, "command": "compare", "seed": cfg.sim.seed, "tolerance": cfg.tolerance}
    if isinstance(cfg.sim.election, BinaryDecay):
        return _compare_decay(cfg, summary)
    exact = _exact_utilities(cfg)
    if exact is None:
        raise ConfigError("compare mode needs a deterministic latency model or decay election; stochastic models have no closed form")
    report = run_experiment(cfg.sim)
    tags = cfg.sim.latency.tags()
    rows = [["validator", "tag", "simulated_utility", "stderr", "exact_utility", "relative_error", "within_tolerance"]]
    ok = True
    worst = 0.0
    for k in range(cfg.sim.n):
        ref = float(exact[k])
        rel = abs(report.utility[k] - ref) / abs(ref) if ref else math.inf
        good = rel <= cfg.tolerance
        ok &= good
        worst = max(worst, rel)
        rows.append([k, tags[k], _fmt(report.utility[k]), _fmt(report.utility_se[k]), _fmt(ref), _fmt(rel), str(good).lower()])
    summary.update(max_relative_error=_fmt(worst), passed=str(ok).lower(), **report.summary())
    return {"compare.csv": _csv_text(rows), "utilities.csv": _csv_text(report.csv_rows())}, summary, ok


def _compare_decay(cfg: ExperimentConfig, summary: dict):
    freq = empirical_weight_distribution(cfg.sim)
    rho = cfg.sim.election.rho
    stationary = np.array([[oracle.binary_decay_stationary(float(p), rho)[0] for p in rep] for rep in freq.replication_exceed])
    diff = freq.replication_low - stationary
    se = diff.std(axis=0, ddof=1) / math.sqrt(diff.shape[0]) if diff.shape[0] > 1 else np.full(cfg.sim.n, math.nan)
    mean = diff.mean(axis=0)
    rows = [["validator", "elections", "exceed_rate", "simulated_low", "stationary_low", "difference", "stderr", "within_tolerance"]]
    ok = True
    for k in range(cfg.sim.n):
        # three standard errors; a single replication falls back to the absolute tolerance
        bound = 3 * se[k] if math.isfinite(se[k]) else cfg.tolerance
        good = abs(mean[k]) <= bound
        ok &= bool(good)
        rows.append([k, int(freq.elections[k]), _fmt(freq.exceed_rate[k]), _fmt(freq.low[k]), _fmt(stationary[:, k].mean()), _fmt(mean[k]), _fmt(se[k]), str(bool(good)).lower()])
    summary.update(passed=str(ok).lower(), rho=rho, threshold=cfg.sim.election.threshold)
    return {"compare.csv": _csv_text(rows)}, summary, ok


_COMMANDS = {"simulate": _simulate, "oracle": _oracle, "compare": _compare}


def run(command: str, cfg: ExperimentConfig, out: Path) -> int:
    files, summary, ok = _COMMANDS[command](cfg)
    files["summary.txt"] = _summary_text(summary)
    write_outputs(out, files)
    return EXIT_OK if ok else EXIT_TOLERANCE


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    values = copy.deepcopy(cfg.values)
    if args.seed is not None:
        values["simulation"]["seed"] = args.seed
    if args.rounds is not None:
        values["simulation"]["rounds"] = args.rounds
    if args.normalize_weights is not None:
        values["latency"]["normalize"] = args.normalize_weights
    base = cfg.source.parent if cfg.source else Path(".")
    return build(values, base, None, cfg.source)


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as e:
        print(f"timing-sim: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = load_config(args.config)
            cfg = _apply_overrides(cfg, args)
        for w in {str(w.message) for w in caught}:
            log.warning("%s", w)
    except FileNotFoundError as e:
        print(f"timing-sim: config not found: {e.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        print(f"timing-sim: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"timing-sim: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    out = args.out or (Path(cfg.out) if cfg.out else None)
    if out is None:
        print("timing-sim: error: no output directory (use --out or [experiment] out)", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s for %s", args.command, cfg.name)
    try:
        status = run(args.command, cfg, out)
    except ConfigError as e:
        print(f"timing-sim: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"timing-sim: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    if status == EXIT_TOLERANCE:
        print(f"timing-sim: tolerance breach; see {out / 'compare.csv'}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
