"""Coupled market simulation and the Monte Carlo experiment driver.

One Euler-Maruyama step advances price, signal, noise flow, both inventories,
both cash accounts and every estimator, with controls held constant over each
interval and computed from left-endpoint states.  Paths are vectorised: a
batch carries one ndarray per state variable, and every path owns its own
seeded random stream so results are independent of batch or thread layout.

Strategy arms (the broker's optimal rate and three benchmark rules) re-run
the same path index with identical Gaussian increments, which is what makes
the outperformance statistics tight.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .broker import BrokerCoefficients, solve_broker
from .errors import ValidationError
from .filters import FlowFilterCoefficients, flow_filter_coefficients
from .odes import TimeGrid, write_columns_csv
from .params import ModelParams
from .trader import TraderCoefficients, solve_trader

__all__ = [
    "StrategyConfig",
    "CoefficientBundle",
    "build_coefficients",
    "PathResult",
    "simulate_path",
    "simulate_recorded",
    "benchmark_control",
    "run_experiment",
    "export_path_csv",
    "export_filter_csv",
    "RECORD_SERIES",
]

BROKER_MODES = ("optimal", "benchmark1", "benchmark2", "benchmark3")
SIGNAL_SOURCES = ("price", "flow", "naive")

RECORD_SERIES = (
    "price", "signal", "flow", "rate_broker", "rate_trader",
    "q_broker", "q_trader", "q_trader_belief", "cash_broker", "cash_trader",
    "nu_hat", "alpha_hat_price", "alpha_hat_flow", "alpha_hat_naive",
)


@dataclass(frozen=True)
class StrategyConfig:
    """What the broker does on a simulated path.

    Benchmarks ignore ``signal_source``.  ``mispecify_qi`` draws the trader's
    true initial inventory from a standard normal while the broker's belief
    stays at zero; in that mode the broker falls back to a plain inventory
    unwind over the last ``unwind_tail`` steps when she relies on a
    flow-derived signal estimate (which degrades near the horizon).
    """

    broker_mode: str = "optimal"
    signal_source: str = "price"
    mispecify_qi: bool = False
    c_belief: float | None = None
    seed: int = 1729
    unwind_tail: int = 10

    def __post_init__(self):
        if self.broker_mode not in BROKER_MODES:
            raise ValidationError(f"broker_mode must be one of {BROKER_MODES}")
        if self.signal_source not in SIGNAL_SOURCES:
            raise ValidationError(f"signal_source must be one of {SIGNAL_SOURCES}")
        if self.unwind_tail < 0:
            raise ValidationError("unwind_tail must be >= 0")


@dataclass(frozen=True)
class CoefficientBundle:
    trader: TraderCoefficients
    broker: BrokerCoefficients
    flow: FlowFilterCoefficients | None


def build_coefficients(params: ModelParams, grid: TimeGrid,
                       c_belief: float | None = None,
                       with_flow: bool = True) -> CoefficientBundle:
    """Solve every deterministic table needed by the simulator."""
    trader = solve_trader(params, grid)
    broker = solve_broker(params, trader, grid, c_belief=c_belief)
    flow = flow_filter_coefficients(trader, params, grid) if with_flow else None
    return CoefficientBundle(trader, broker, flow)


def benchmark_control(kind: int, t: float, eta: float, q_broker: float,
                      flow: float, horizon: float, dt: float) -> float:
    """Benchmark broker rates: 1 externalises the informed flow and unwinds
    inventory linearly, 2 internalises everything and unwinds linearly,
    3 externalises both client flows.  The unwind denominator is floored at
    one step near the horizon."""
    remaining = max(horizon - t, dt)
    if kind == 1:
        return eta - q_broker / remaining
    if kind == 2:
        return -q_broker / remaining
    if kind == 3:
        return eta + flow
    raise ValidationError(f"unknown benchmark kind {kind!r}")


@dataclass
class PathResult:
    """Full record of one simulated path (every series has steps+1 nodes)."""

    grid: TimeGrid
    config: StrategyConfig
    seed: int
    t: np.ndarray
    price: np.ndarray
    signal: np.ndarray
    flow: np.ndarray
    rate_broker: np.ndarray
    rate_trader: np.ndarray
    q_broker: np.ndarray
    q_trader: np.ndarray
    q_trader_belief: np.ndarray
    cash_broker: np.ndarray
    cash_trader: np.ndarray
    nu_hat: np.ndarray
    alpha_hat_price: np.ndarray
    alpha_hat_flow: np.ndarray
    alpha_hat_naive: np.ndarray
    components: np.ndarray           # (steps+1, 4) additive pieces of the rate
    wealth_broker: float             # cash + inventory marked at the last price
    wealth_trader: float
    notional: float                  # integral of price * (|nu|+|eta|+|xi|)
    blown: bool
    blow_step: int
    max_inventory_gap: float
    max_cash_gap: float


class _Tables:
    """Grid-index arrays consumed by the stepper (plain ndarrays only).

    The trader side (his feedback loadings and speed-filter gain) comes from
    ``trader_true``; everything the broker computes — her feedback gains, her
    filters, and the loadings she uses to invert the client's rate — comes
    from the (possibly mispecified) model bundle.
    """

    def __init__(self, params_true: ModelParams, params_model: ModelParams,
                 bundle: CoefficientBundle, trader_true: TraderCoefficients | None = None):
        tr_model, br, fl = bundle.trader, bundle.broker, bundle.flow
        tr = trader_true if trader_true is not None else tr_model
        self.grid = tr.grid
        n = self.grid.steps + 1
        # trader side (true dynamics of the client)
        self.f1 = tr.f1.values
        self.f2 = tr.f2.values
        self.f3 = tr.f3.values
        ss = params_true.sigma_price
        self.gain_nu = (params_true.perm_impact * tr.var_nu.values / ss ** 2
                        if ss > 0.0 else np.zeros(n))
        self.theta_trader = params_true.theta_speed
        # broker side (her model of the client and of the signal)
        self.f1_belief = tr_model.f1.values
        self.f3_belief = tr_model.f3.values
        self.gain_price = ((br.var_alpha.values
                            + params_model.rho * ss * params_model.sigma_signal) / ss ** 2
                           if ss > 0.0 else np.zeros(n))
        self.gains = br.gains.values
        self.kappa_model = params_model.kappa_signal
        if fl is not None:
            self.inv_scale = fl.inv_scale.values
            self.g6 = fl.drift_scale.values
            self.g7 = fl.drift_signal.values
            self.g8 = fl.drift_flow.values
            self.g9 = fl.drift_rate.values
            self.gain_flow = (fl.drift_signal.values * fl.var_alt.values
                              + params_model.sigma_signal * fl.noise_mix.values)
        else:
            self.inv_scale = None
        self.true = params_true


def _draw_noise(base_seed: int, path_indices, steps: int):
    """Per-path streams: one initial-inventory draw then the step increments.

    Path n uses ``default_rng(base_seed ^ n)``; the draw order is fixed so
    every strategy arm sees bit-identical noise for a given path index.
    """
    m = len(path_indices)
    eps = np.empty((steps, m, 3))
    q0 = np.empty(m)
    for j, n in enumerate(path_indices):
        rng = np.random.default_rng(base_seed ^ int(n))
        q0[j] = rng.standard_normal()
        eps[:, j, :] = rng.standard_normal((steps, 3))
    return q0, eps


def _simulate_core(tables: _Tables, config: StrategyConfig, eps: np.ndarray,
                   q0_draw: np.ndarray, record: bool, init: dict | None = None):
    """Advance a batch of paths; returns (metrics dict, records dict | None)."""
    p = tables.true
    grid = tables.grid
    n_steps = grid.steps
    dt = grid.dt
    horizon = grid.horizon
    sqdt = math.sqrt(dt)
    m = eps.shape[1]
    mode = config.broker_mode
    source = config.signal_source
    optimal = mode == "optimal"
    bench_kind = 0 if optimal else int(mode[-1])
    has_flow = tables.inv_scale is not None
    if source == "flow" and not has_flow:
        raise ValidationError("signal_source='flow' requires flow-filter coefficients")
    track = optimal or record
    track_flow = track and has_flow
    override_from = (n_steps - config.unwind_tail
                     if (config.mispecify_qi and optimal and source in ("flow", "naive"))
                     else n_steps + 1)

    rho = p.rho
    rho_c = math.sqrt(max(0.0, 1.0 - rho * rho))
    f1, f2, f3 = tables.f1, tables.f2, tables.f3
    f1b, f3b = tables.f1_belief, tables.f3_belief
    gains = tables.gains

    init = init or {}
    full = lambda key, default: np.full(m, float(init.get(key, default)))
    price = full("price", p.price_init)
    signal = full("signal", p.signal_init)
    flow = full("flow", 0.0)
    q_b = full("q_broker", 0.0)
    q_i = full("q_trader", 0.0)
    if config.mispecify_qi:
        q_i = q_i + q0_draw
    q_i0 = q_i.copy()
    q_ib = full("q_trader_belief", 0.0)
    x_b = full("cash_broker", 0.0)
    x_i = full("cash_trader", 0.0)
    nu_hat = full("nu_hat", 0.0)
    a_price = full("alpha_hat_price", 0.0)
    a_flow = full("alpha_hat_flow", 0.0)

    int_nu = np.zeros(m)
    int_xi = np.zeros(m)
    int_cost_nu = np.zeros(m)
    int_cost_xi = np.zeros(m)
    notional = np.zeros(m)
    inv_gap = np.zeros(m)
    cash_gap = np.zeros(m)
    mse_price = np.zeros(m)
    mse_flow = np.zeros(m)
    maxdiff = np.zeros(m)
    n_check = 4
    check_idx = [n_steps // 4, n_steps // 2, (3 * n_steps) // 4, max(n_steps - 10, 0)]
    checkpoints = np.zeros((n_check, m))
    blown = np.zeros(m, dtype=bool)
    blow_step = np.full(m, -1, dtype=np.int64)

    rec = None
    if record:
        rec = {name: np.zeros((n_steps + 1, m)) for name in RECORD_SERIES}
        rec["components"] = np.zeros((n_steps + 1, 4, m))

    eta = f1[0] * signal + f2[0] * nu_hat + f3[0] * q_i
    gamma = eta - f3b[0] * q_ib
    ztil = gamma * tables.inv_scale[0] if track_flow else None
    f_prev = None

    def signal_est(k):
        if source == "price":
            return a_price
        if source == "flow":
            return a_flow
        kk = min(k, n_steps - 1)
        return gamma / f1b[kk]

    def broker_rate(k, t):
        if optimal:
            if k >= override_from:
                return -q_b / max(horizon - t, dt)
            g = gains[k]
            return g[0] * q_b + g[1] * signal_est(k) + g[2] * flow + g[3] * q_ib
        return benchmark_control(bench_kind, t, eta, q_b, flow, horizon, dt)

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps + 1):
            t = k * dt
            nu = broker_rate(k, t)

            if record:
                r = rec
                r["price"][k] = price
                r["signal"][k] = signal
                r["flow"][k] = flow
                r["rate_broker"][k] = nu
                r["rate_trader"][k] = eta
                r["q_broker"][k] = q_b
                r["q_trader"][k] = q_i
                r["q_trader_belief"][k] = q_ib
                r["cash_broker"][k] = x_b
                r["cash_trader"][k] = x_i
                r["nu_hat"][k] = nu_hat
                r["alpha_hat_price"][k] = a_price
                r["alpha_hat_flow"][k] = a_flow
                r["alpha_hat_naive"][k] = gamma / f1b[min(k, n_steps - 1)]
                if optimal:
                    g = gains[k]
                    r["components"][k, 0] = g[0] * q_b
                    r["components"][k, 1] = g[1] * signal_est(k)
                    r["components"][k, 2] = g[2] * flow
                    r["components"][k, 3] = g[3] * q_ib

            f_now = price * (np.abs(nu) + np.abs(eta) + np.abs(flow))
            if f_prev is not None:
                notional += 0.5 * (f_prev + f_now) * dt
            f_prev = f_now

            if track:
                mse_price += (a_price - signal) ** 2
                mse_flow += (a_flow - signal) ** 2
                # divergence diagnostic: flow filter against the naive readout
                # fed the TRUE inventory (clean reference; under a mispecified
                # belief both belief-based estimates track the same
                # contaminated flow and their gap would hide the blow-up)
                kk = min(k, n_steps - 1)
                diff = np.abs(a_flow - (eta - f3b[kk] * q_i) / f1b[kk])
                if k <= n_steps - 10:
                    maxdiff = np.fmax(maxdiff, diff)
                for ci, ck in enumerate(check_idx):
                    if k == ck:
                        checkpoints[ci] = diff

            if k == n_steps:
                break

            dws = sqdt * eps[k, :, 0]
            dwa = rho * dws + rho_c * sqdt * eps[k, :, 1]
            dwu = sqdt * eps[k, :, 2]

            price_new = price + (p.perm_impact * nu + signal) * dt + p.sigma_price * dws
            signal_new = signal - p.kappa_signal * signal * dt + p.sigma_signal * dwa
            flow_new = flow - p.kappa_flow * flow * dt + p.sigma_flow * dwu

            int_nu += nu * dt
            int_xi += flow * dt
            int_cost_nu += nu * (price + p.temp_impact * nu) * dt
            int_cost_xi += flow * (price + p.fee_uninformed * flow) * dt
            x_b += (-nu * (price + p.temp_impact * nu)
                    + eta * (price + p.fee_informed * eta)
                    + flow * (price + p.fee_uninformed * flow)) * dt
            x_i += -eta * (price + p.fee_informed * eta) * dt
            q_b += (nu - eta - flow) * dt
            q_i += eta * dt
            q_ib += eta * dt

            dy = (price_new - price) - signal * dt
            nu_hat = (nu_hat - tables.theta_trader * nu_hat * dt
                      + tables.gain_nu[k] * (dy - p.perm_impact * nu_hat * dt))
            if track:
                dz = (price_new - price) - p.perm_impact * nu * dt
                a_price = (a_price - tables.kappa_model * a_price * dt
                           + tables.gain_price[k] * (dz - a_price * dt))

            price, signal, flow = price_new, signal_new, flow_new

            eta_next = f1[k + 1] * signal + f2[k + 1] * nu_hat + f3[k + 1] * q_i
            gamma_next = eta_next - f3b[k + 1] * q_ib
            if track_flow:
                ztil_next = gamma_next * tables.inv_scale[k + 1]
                dzf = (ztil_next - ztil) - (tables.g6[k] * ztil + tables.g8[k] * gamma
                                            + tables.g9[k] * nu) * dt
                innov = dzf - tables.g7[k] * a_flow * dt
                a_flow = (a_flow - tables.kappa_model * a_flow * dt
                          + tables.gain_flow[k] * innov)
                ztil = ztil_next
            eta, gamma = eta_next, gamma_next

            inv_gap = np.fmax(inv_gap, np.abs(q_b - int_nu + (q_i - q_i0) + int_xi))
            cash_gap = np.fmax(cash_gap, np.abs(x_b + x_i + int_cost_nu - int_cost_xi))

            probe = price + q_b + x_b + x_i + nu_hat
            if track:
                probe = probe + a_price + (a_flow if track_flow else 0.0)
            bad = ~np.isfinite(probe)
            fresh = bad & ~blown
            if np.any(fresh):
                blow_step[fresh] = k + 1
                blown |= fresh

    with np.errstate(over="ignore", invalid="ignore"):
        wealth_b = x_b + q_b * price
        wealth_i = x_i + q_i * price
    metrics = {
        "wealth_broker": wealth_b,
        "wealth_trader": wealth_i,
        "notional": notional,
        "blown": blown,
        "blow_step": blow_step,
        "max_inventory_gap": inv_gap,
        "max_cash_gap": cash_gap,
        "mse_price": mse_price / (n_steps + 1),
        "mse_flow": mse_flow / (n_steps + 1),
        "max_alt_naive_diff": maxdiff,
        "alt_naive_checkpoints": checkpoints,
    }
    return metrics, rec


def simulate_path(params: ModelParams, trader: TraderCoefficients,
                  broker: BrokerCoefficients, flow: FlowFilterCoefficients | None,
                  config: StrategyConfig = StrategyConfig(), seed: int | None = None,
                  model_params: ModelParams | None = None,
                  trader_true: TraderCoefficients | None = None,
                  init: dict | None = None) -> PathResult:
    """Simulate one path with a full record of every series.

    ``trader``/``broker``/``flow`` are the broker's model tables; pass
    ``trader_true`` (with ``model_params``) when the broker's model of the
    client is mispecified relative to the client's actual coefficients.
    """
    bundle = CoefficientBundle(trader, broker, flow)
    tables = _Tables(params, model_params or params, bundle, trader_true)
    use_seed = config.seed if seed is None else int(seed)
    q0, eps = _draw_noise(use_seed, [0], trader.grid.steps)
    metrics, rec = _simulate_core(tables, config, eps, q0, record=True, init=init)
    series = {name: rec[name][:, 0].copy() for name in RECORD_SERIES}
    return PathResult(
        grid=trader.grid,
        config=config,
        seed=use_seed,
        t=trader.grid.times,
        components=rec["components"][:, :, 0].copy(),
        wealth_broker=float(metrics["wealth_broker"][0]),
        wealth_trader=float(metrics["wealth_trader"][0]),
        notional=float(metrics["notional"][0]),
        blown=bool(metrics["blown"][0]),
        blow_step=int(metrics["blow_step"][0]),
        max_inventory_gap=float(metrics["max_inventory_gap"][0]),
        max_cash_gap=float(metrics["max_cash_gap"][0]),
        **series,
    )


def simulate_recorded(params: ModelParams, bundle: CoefficientBundle,
                      config: StrategyConfig, n_paths: int, base_seed: int,
                      model_params: ModelParams | None = None):
    """Record full series for a (small) batch of paths; returns (metrics, records)."""
    tables = _Tables(params, model_params or params, bundle)
    q0, eps = _draw_noise(base_seed, range(n_paths), bundle.trader.grid.steps)
    return _simulate_core(tables, config, eps, q0, record=True)


def _chunk_ranges(n: int, size: int):
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def run_experiment(params: ModelParams, grid: TimeGrid, config: StrategyConfig,
                   n_paths: int, base_seed: int | None = None,
                   model_params: ModelParams | None = None,
                   bundle: CoefficientBundle | None = None,
                   chunk_size: int = 2500, threads: int = 1):
    """Simulate the optimal strategy and all three benchmarks on coupled noise.

    Every path index runs once per strategy arm with the same Gaussian
    increments (seed ``base_seed ^ index``).  When ``model_params`` differs
    from ``params``, the stressed values enter only the broker's coefficient
    systems and filters; the client keeps the true coefficients and the
    simulated dynamics keep the true parameters.  Returns an
    :class:`~brokergame.analytics.ExperimentReport` plus the raw per-path
    metric arrays keyed by arm name.
    """
    from .analytics import build_experiment_report   # deferred: avoids module cycle

    if n_paths < 1:
        raise ValidationError("n_paths must be >= 1")
    seed = config.seed if base_seed is None else int(base_seed)
    mp = model_params or params
    trader_true = None
    if bundle is None:
        bundle = build_coefficients(mp, grid, c_belief=config.c_belief)
        if mp is not params:
            trader_true = solve_trader(params, grid)
    tables = _Tables(params, mp, bundle, trader_true)
    arms = ["optimal", "benchmark1", "benchmark2", "benchmark3"]
    keys = ("wealth_broker", "notional", "blown", "blow_step", "max_inventory_gap",
            "max_cash_gap", "mse_price", "mse_flow", "max_alt_naive_diff")
    per_arm = {arm: {k: np.empty(n_paths, dtype=(bool if k == "blown" else
                                                 (np.int64 if k == "blow_step" else float)))
                     for k in keys} for arm in arms}
    checkpoints = np.zeros((4, n_paths))

    def run_chunk(lo_hi):
        lo, hi = lo_hi
        q0, eps = _draw_noise(seed, range(lo, hi), grid.steps)
        out = {}
        for arm in arms:
            cfg = StrategyConfig(
                broker_mode=arm, signal_source=config.signal_source,
                mispecify_qi=config.mispecify_qi, c_belief=config.c_belief,
                seed=seed, unwind_tail=config.unwind_tail,
            )
            out[arm], _ = _simulate_core(tables, cfg, eps, q0, record=False)
        return lo, hi, out

    ranges = _chunk_ranges(n_paths, max(1, chunk_size))
    if threads and threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, ranges))
    else:
        results = [run_chunk(r) for r in ranges]
    for lo, hi, out in results:
        for arm in arms:
            for k in keys:
                per_arm[arm][k][lo:hi] = out[arm][k]
        checkpoints[:, lo:hi] = out["optimal"]["alt_naive_checkpoints"]
    per_arm["optimal"]["alt_naive_checkpoints"] = checkpoints

    report = build_experiment_report(per_arm, params=params, model_params=mp,
                                     config=config, n_paths=n_paths, base_seed=seed)
    return report, per_arm


def export_path_csv(result: PathResult, path_or_file, bands: dict | None = None) -> None:
    """Full state/control/estimate time series of one path; optional extra
    percentile-band columns (name -> array) appended on the right."""
    header = ["t"] + list(RECORD_SERIES) + [
        "comp_inventory", "comp_signal", "comp_flow", "comp_qtrader",
    ]
    cols = [result.t] + [getattr(result, name) for name in RECORD_SERIES]
    cols += [result.components[:, j] for j in range(4)]
    if bands:
        for name in sorted(bands):
            header.append(name)
            cols.append(bands[name])
    write_columns_csv(path_or_file, header, cols)


def export_filter_csv(result: PathResult, trader: TraderCoefficients,
                      broker: BrokerCoefficients, flow: FlowFilterCoefficients | None,
                      path_or_file) -> None:
    """Estimator-focused per-path CSV including the deterministic variances."""
    n = result.grid.steps + 1
    var_alt = flow.var_alt.values if flow is not None else np.zeros(n)
    header = ["t", "signal", "alpha_hat_price", "alpha_hat_flow", "alpha_hat_naive",
              "rate_broker", "nu_hat", "var_nu", "var_alpha", "var_alt"]
    cols = [result.t, result.signal, result.alpha_hat_price, result.alpha_hat_flow,
            result.alpha_hat_naive, result.rate_broker, result.nu_hat,
            trader.var_nu.values, broker.var_alpha.values, var_alt]
    write_columns_csv(path_or_file, header, cols)
