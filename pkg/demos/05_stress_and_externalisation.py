"""Robustness to mispecified learning parameters, and effective externalisation.

Stressing a learning parameter feeds the wrong value into the broker's
coefficient systems and filters while the market and the client keep the true
values.  The effective externalisation table is the ratio of the broker's
signal gain to the client's: how much informed flow she offloads per unit
when her estimate is good.
"""

import numpy as np

import brokergame as bg

grid = bg.TimeGrid(1.0, 1000)
params = bg.DEFAULT_PARAMS

print("effective externalisation vs signal mean reversion")
for ka in (2.5, 5.0, 7.5):
    p = params.replace(kappa_signal=ka)
    tr = bg.solve_trader(p, grid)
    br = bg.solve_broker(p, tr, grid)
    ratio = bg.effective_externalisation(tr, br)
    print(f"  kappa_signal = {ka:4.1f}: time-averaged ratio = {ratio.values.mean():6.3f}")
print("a faster-reverting signal is easier to trust, so the broker offloads more.\n")

print("clamped externalisation quotient on one simulated path")
bundle = bg.build_coefficients(params, grid)
res = bg.simulate_path(params, bundle.trader, bundle.broker, bundle.flow,
                       bg.StrategyConfig(signal_source="flow"), seed=3)
q = bg.externalisation_quotient(res.rate_broker, res.rate_trader)
print(f"  median G(nu)/G(eta) over the path: {np.median(q):.3f}\n")

print("stress sweep (+/-50% on the broker's learning parameters, 1,000 paths)")
sweep = {name: [0.5, 1.5] for name in bg.LEARNING_PARAMS}
sr = bg.stress_runner(params, sweep, grid, bg.StrategyConfig(), 1000,
                      base_seed=20240901, threads=2)
print(f"  base     : " + " / ".join(
    f"{sr.base.benchmarks[i].mean:6.1f}" for i in (1, 2, 3)))
for cell in sr.cells:
    rep = cell.report
    print(f"  {cell.param:13s} x{cell.multiplier:3.1f}: " + " / ".join(
        f"{rep.benchmarks[i].mean:6.1f}" for i in (1, 2, 3)))
print("outperformance over benchmarks 2 and 3 survives every mispecification.")
