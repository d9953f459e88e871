"""Command-line front end.

Subcommands::

    coeffs      solve and export every deterministic coefficient table
    diag        existence diagnostic (eigenvalues + scaled determinant)
    path        simulate one path (optionally with percentile bands)
    experiment  Monte Carlo outperformance run against all benchmarks
    stress      +/-50% sweep of the agents' learning parameters

Configuration is an INI file whose defaults reproduce the baseline
experiment; any unknown section or key is rejected.  Exit codes: 0 success,
2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import sys

import numpy as np

from . import analytics
from .broker import export_broker_csv
from .errors import BrokerGameError, SimulationBlowupError, ValidationError
from .odes import TimeGrid, write_columns_csv
from .params import ModelParams
from .sim import (RECORD_SERIES, StrategyConfig, build_coefficients, export_filter_csv,
                  export_path_csv, run_experiment, simulate_path, simulate_recorded)
from .trader import export_trader_csv

_GRID_KEYS = {"horizon": float, "steps": int}
_STRATEGY_KEYS = {"signal_source": str, "mispecify_qi": str, "c_belief": float,
                  "unwind_tail": int}
_EXPERIMENT_KEYS = {"paths": int, "seed": int, "chunk": int, "threads": int}
_OUTPUT_KEYS = {"out_dir": str}


@dataclasses.dataclass
class RunConfig:
    params: ModelParams = ModelParams()
    grid: TimeGrid = TimeGrid()
    signal_source: str = "price"
    mispecify_qi: bool = False
    c_belief: float | None = None
    unwind_tail: int = 10
    paths: int = 10000
    seed: int = 1729
    chunk: int = 2500
    threads: int = 0          # 0 = all cores
    out_dir: str = "."

    def strategy(self, broker_mode: str = "optimal") -> StrategyConfig:
        return StrategyConfig(
            broker_mode=broker_mode, signal_source=self.signal_source,
            mispecify_qi=self.mispecify_qi, c_belief=self.c_belief,
            seed=self.seed, unwind_tail=self.unwind_tail,
        )


def _parse_bool(raw: str, field: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on", "normal"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"field '{field}': cannot parse boolean from {raw!r}")


def load_config(path: str | None) -> RunConfig:
    """Read the INI configuration; unknown sections or keys are errors."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValidationError(f"config file not found: {path}")
    model_fields = {f.name: float for f in dataclasses.fields(ModelParams)}
    known = {"grid": _GRID_KEYS, "model": model_fields, "strategy": _STRATEGY_KEYS,
             "experiment": _EXPERIMENT_KEYS, "output": _OUTPUT_KEYS}
    for section in parser.sections():
        if section not in known:
            raise ValidationError(f"unknown config section '{section}'")
        for key in parser[section]:
            if key not in known[section]:
                raise ValidationError(f"unknown key '{key}' in section [{section}]")

    def section_kwargs(name):
        out = {}
        if parser.has_section(name):
            for key, raw in parser[name].items():
                caster = known[name][key]
                try:
                    out[key] = caster(raw)
                except ValueError as exc:
                    raise ValidationError(f"field '{name}.{key}': {exc}") from exc
        return out

    cfg.params = ModelParams(**section_kwargs("model"))
    gkw = section_kwargs("grid")
    cfg.grid = TimeGrid(gkw.get("horizon", 1.0), gkw.get("steps", 1000))
    skw = section_kwargs("strategy")
    if "signal_source" in skw:
        cfg.signal_source = skw["signal_source"]
    if "mispecify_qi" in skw:
        cfg.mispecify_qi = _parse_bool(skw["mispecify_qi"], "strategy.mispecify_qi")
    if "c_belief" in skw:
        cfg.c_belief = skw["c_belief"]
    if "unwind_tail" in skw:
        cfg.unwind_tail = skw["unwind_tail"]
    ekw = section_kwargs("experiment")
    cfg.paths = ekw.get("paths", cfg.paths)
    cfg.seed = ekw.get("seed", cfg.seed)
    cfg.chunk = ekw.get("chunk", cfg.chunk)
    cfg.threads = ekw.get("threads", cfg.threads)
    okw = section_kwargs("output")
    cfg.out_dir = okw.get("out_dir", cfg.out_dir)
    return cfg


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "paths", None) is not None:
        cfg.paths = args.paths
    if getattr(args, "mode", None) is not None:
        cfg.signal_source = args.mode
    if getattr(args, "mispecify_qi", False):
        cfg.mispecify_qi = True
    if getattr(args, "c_belief", None) is not None:
        cfg.c_belief = args.c_belief
    if getattr(args, "out_dir", None) is not None:
        cfg.out_dir = args.out_dir
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    return cfg


def _threads(cfg: RunConfig) -> int:
    return cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)


def _outpath(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def cmd_coeffs(cfg: RunConfig) -> int:
    bundle = build_coefficients(cfg.params, cfg.grid, c_belief=cfg.c_belief)
    export_trader_csv(bundle.trader, _outpath(cfg, "trader_coefficients.csv"))
    export_broker_csv(bundle.broker, _outpath(cfg, "broker_coefficients.csv"))
    _write_eigen_csv(bundle.broker, _outpath(cfg, "eigenvalues.csv"))
    print(f"wrote coefficient tables to {cfg.out_dir}")
    return 0


def _write_eigen_csv(broker, path) -> None:
    ev = broker.eigvals.values
    write_columns_csv(path, ["eig1", "eig2", "eig3", "eig4"],
                      [ev[:, j] for j in range(4)])


def cmd_diag(cfg: RunConfig) -> int:
    bundle = build_coefficients(cfg.params, cfg.grid, c_belief=cfg.c_belief)
    _write_eigen_csv(bundle.broker, _outpath(cfg, "eigenvalues.csv"))
    ev = bundle.broker.eigvals.values
    det = np.abs(bundle.broker.det_scaled.values).max()
    top3 = ev[:, :3].max()
    lam4 = np.abs(ev[:, 3]).max()
    ok = (top3 < 0.0) and (lam4 <= 1e-8)
    print(f"max leading eigenvalue      : {top3:.6e}")
    print(f"max |fourth eigenvalue|     : {lam4:.6e}")
    print(f"max |row-scaled determinant|: {det:.6e}")
    print(f"reduced-vs-full block gap   : {bundle.broker.block_dev:.6e}")
    print("existence diagnostic:", "clean" if ok else "FLAGGED")
    return 0 if ok else 3


def cmd_path(cfg: RunConfig, n_band: int) -> int:
    bundle = build_coefficients(cfg.params, cfg.grid, c_belief=cfg.c_belief)
    result = simulate_path(cfg.params, bundle.trader, bundle.broker, bundle.flow,
                           cfg.strategy(), seed=cfg.seed)
    bands = None
    if n_band > 1:
        _, rec = simulate_recorded(cfg.params, bundle, cfg.strategy(), n_band, cfg.seed)
        bands = {}
        for name in RECORD_SERIES:
            bands[f"p05_{name}"] = np.percentile(rec[name], 5.0, axis=1)
            bands[f"p95_{name}"] = np.percentile(rec[name], 95.0, axis=1)
    export_path_csv(result, _outpath(cfg, "path.csv"), bands=bands)
    export_filter_csv(result, bundle.trader, bundle.broker, bundle.flow,
                      _outpath(cfg, "filters.csv"))
    print(f"wrote path.csv and filters.csv to {cfg.out_dir}")
    if result.blown:
        # the series are still written (flagged, not dropped)
        raise SimulationBlowupError(
            f"path produced a non-finite state at step {result.blow_step}"
        )
    return 0


def cmd_experiment(cfg: RunConfig, benchmarks: str) -> int:
    report, _ = run_experiment(cfg.params, cfg.grid, cfg.strategy(), cfg.paths,
                               base_seed=cfg.seed, chunk_size=cfg.chunk,
                               threads=_threads(cfg))
    if benchmarks != "all":
        keep = {int(benchmarks)}
        report = dataclasses.replace(
            report, benchmarks={i: b for i, b in report.benchmarks.items() if i in keep}
        )
    with open(_outpath(cfg, "report.json"), "w", encoding="ascii") as fh:
        fh.write(analytics.report_to_json(report) + "\n")
    analytics.report_to_csv(report, _outpath(cfg, "report.csv"))
    for i, b in sorted(report.benchmarks.items()):
        print(f"benchmark {i}: out = {b.mean:.2f} ({b.std:.0f}), "
              f"p = {b.p_value:.2e}, excluded = {b.n_excluded}")
    return 0


def cmd_stress(cfg: RunConfig) -> int:
    sweep = {name: [0.5, 1.5] for name in analytics.LEARNING_PARAMS}
    sr = analytics.stress_runner(cfg.params, sweep, cfg.grid, cfg.strategy(),
                                 cfg.paths, base_seed=cfg.seed, chunk_size=cfg.chunk,
                                 threads=_threads(cfg))
    with open(_outpath(cfg, "stress.json"), "w", encoding="ascii") as fh:
        fh.write(analytics.stress_to_json(sr) + "\n")
    analytics.stress_to_csv(sr, _outpath(cfg, "stress.csv"))
    for cell in sr.cells:
        means = {i: round(b.mean, 1) for i, b in sorted(cell.report.benchmarks.items())}
        print(f"{cell.param} x{cell.multiplier}: {means}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brokergame",
                                 description="broker / informed-trader game simulator")
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--paths", type=int)
    ap.add_argument("--mode", choices=("price", "flow", "naive"),
                    help="broker's signal source")
    ap.add_argument("--benchmark", choices=("1", "2", "3", "all"), default="all")
    ap.add_argument("--mispecify-qi", dest="mispecify_qi", action="store_true",
                    help="draw the trader's true initial inventory from N(0,1)")
    ap.add_argument("--c-belief", dest="c_belief", type=float)
    ap.add_argument("--out-dir", dest="out_dir")
    ap.add_argument("--threads", type=int, help="worker cap (0 = all cores)")
    ap.add_argument("command", choices=("coeffs", "diag", "path", "experiment", "stress"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "coeffs":
            return cmd_coeffs(cfg)
        if args.command == "diag":
            return cmd_diag(cfg)
        if args.command == "path":
            return cmd_path(cfg, n_band=cfg.paths if args.paths is not None else 1)
        if args.command == "experiment":
            return cmd_experiment(cfg, args.benchmark)
        if args.command == "stress":
            return cmd_stress(cfg)
        raise ValidationError(f"unknown command {args.command!r}")
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except BrokerGameError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
